#include "tct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "tct/error.hpp"

namespace tct {

namespace {

void check_pair(const SliceImage &a, const SliceImage &b, RoiSpan roi) {
    if (a.side != b.side || a.size() != b.size()) {
        throw DomainError("metrics: images differ in size");
    }
    if (!roi.empty() && roi.size() != a.size()) {
        throw DomainError("metrics: ROI mask does not match the image");
    }
}

bool in_roi(RoiSpan roi, std::size_t p) { return roi.empty() || roi[p] != 0; }

double roi_max(const SliceImage &img, RoiSpan roi) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < img.size(); ++p) {
        if (in_roi(roi, p)) {
            m = std::max(m, img.values[p]);
        }
    }
    return m;
}

std::pair<double, double> mean_std(const std::vector<double> &v) {
    if (v.empty()) {
        return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    return {mean, v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0};
}

} // namespace

double rmse(const SliceImage &a, const SliceImage &b, RoiSpan roi) {
    check_pair(a, b, roi);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (in_roi(roi, p)) {
            const double d = a.values[p] - b.values[p];
            acc += d * d;
            ++count;
        }
    }
    if (count == 0) {
        throw DomainError("metrics: empty ROI");
    }
    return std::sqrt(acc / static_cast<double>(count));
}

double psnr(const SliceImage &a, const SliceImage &b, RoiSpan roi, std::optional<double> peak) {
    const double e = rmse(a, b, roi);
    if (e == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double pk = peak ? *peak : roi_max(b, roi);
    return 20.0 * std::log10(pk / e);
}

SsimResult ssim_detail(const SliceImage &a, const SliceImage &b, RoiSpan roi,
                       const SsimOptions &opts) {
    check_pair(a, b, roi);
    if (opts.window < 1 || opts.window % 2 == 0 || !(opts.sigma > 0.0)) {
        throw ConfigError("ssim: window must be odd and sigma positive");
    }
    const int n = a.side;
    const double peak = opts.peak ? *opts.peak : std::max(roi_max(a, roi), roi_max(b, roi));
    const double c1 = (opts.k1 * peak) * (opts.k1 * peak);
    const double c2 = (opts.k2 * peak) * (opts.k2 * peak);

    SsimResult res;
    for (int win = std::min(opts.window, n - (n % 2 == 0 ? 1 : 0)); win >= 1; win -= 2) {
        const int h = win / 2;
        std::vector<double> g(static_cast<std::size_t>(win));
        double gsum = 0.0;
        for (int k = 0; k < win; ++k) {
            g[k] = std::exp(-0.5 * (k - h) * (k - h) / (opts.sigma * opts.sigma));
            gsum += g[k];
        }
        for (double &w : g) {
            w /= gsum;
        }
        // per-row partial sums, added serially so the value is thread-count independent
        std::vector<double> row_total(static_cast<std::size_t>(n), 0.0);
        std::vector<std::size_t> row_count(static_cast<std::size_t>(n), 0);
#pragma omp parallel for schedule(static)
        for (int r = h; r < n - h; ++r) {
            for (int c = h; c < n - h; ++c) {
                if (!in_roi(roi, static_cast<std::size_t>(r) * n + c)) {
                    continue;
                }
                double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int dr = -h; dr <= h; ++dr) {
                    for (int dc = -h; dc <= h; ++dc) {
                        const double w = g[dr + h] * g[dc + h];
                        const double va = a.at(r + dr, c + dc);
                        const double vb = b.at(r + dr, c + dc);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                const double var_a = saa - ma * ma;
                const double var_b = sbb - mb * mb;
                const double cov = sab - ma * mb;
                row_total[r] += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                                ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++row_count[r];
            }
        }
        double total = 0.0;
        std::size_t count = 0;
        for (int r = 0; r < n; ++r) {
            total += row_total[r];
            count += row_count[r];
        }
        if (count > 0) {
            res.value = total / static_cast<double>(count);
            res.window = win;
            res.shrunk = win != opts.window;
            res.samples = count;
            return res;
        }
    }
    throw DomainError("metrics: empty ROI");
}

double ssim(const SliceImage &a, const SliceImage &b, RoiSpan roi, const SsimOptions &opts) {
    return ssim_detail(a, b, roi, opts).value;
}

MetricSample evaluate(const SliceImage &result, const SliceImage &truth, RoiSpan roi,
                      std::optional<double> peak) {
    MetricSample s;
    s.rmse = rmse(result, truth, roi);
    s.psnr = psnr(result, truth, roi, peak);
    SsimOptions so;
    so.peak = peak;
    s.ssim = ssim(result, truth, roi, so);
    return s;
}

std::string format_metrics_table(const std::vector<MethodMetrics> &rows, char delimiter) {
    std::ostringstream os;
    os << std::setprecision(6);
    const char d = delimiter;
    os << "method" << d << "n" << d << "rmse_mean" << d << "rmse_std" << d << "psnr_mean" << d
       << "psnr_std" << d << "ssim_mean" << d << "ssim_std" << '\n';
    for (const auto &row : rows) {
        std::vector<double> r, p, s;
        for (const auto &m : row.samples) {
            r.push_back(m.rmse);
            if (std::isfinite(m.psnr)) {
                p.push_back(m.psnr);
            }
            s.push_back(m.ssim);
        }
        const auto [rm, rs] = mean_std(r);
        const auto [pm, ps] = mean_std(p);
        const auto [sm, ss] = mean_std(s);
        os << row.method << d << row.samples.size() << d << rm << d << rs << d << pm << d << ps
           << d << sm << d << ss << '\n';
    }
    return os.str();
}

} // namespace tct
