#include "tct/atv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tct/error.hpp"
#include "tct/projector.hpp"

namespace tct {

Sector sector_of(double x, double y) {
    const double a = std::atan2(y, x);
    if (a >= -0.25 * pi && a < 0.25 * pi) {
        return Sector::right;
    }
    if (a >= 0.25 * pi && a < 0.75 * pi) {
        return Sector::top;
    }
    if (a >= -0.75 * pi && a < -0.25 * pi) {
        return Sector::bottom;
    }
    return Sector::left;
}

void AtvConfig::validate() const {
    if (n_sart_iters < 0 || n_tv_steps < 0) {
        throw ConfigError("atv: iteration counts must be non-negative");
    }
    if (!(relaxation > 0.0 && relaxation < 2.0)) {
        throw ConfigError("atv: relaxation must lie in (0, 2)");
    }
    if (tv_step < 0.0 || tv_step_ratio < 0.0) {
        throw ConfigError("atv: TV step must be non-negative");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("atv: smoothing epsilon must be positive");
    }
    if (!(divergence_factor > 1.0)) {
        throw ConfigError("atv: divergence factor must exceed 1");
    }
    for (const auto &w : sector_weights) {
        if (!(w.h > 0.0 && w.v > 0.0) || std::abs(w.h + w.v - 1.0) > 1e-9) {
            throw ConfigError("atv: sector weights must be positive and sum to 1");
        }
    }
}

GradientWeights AtvConfig::weights(Sector s) const {
    GradientWeights w = sector_weights[static_cast<std::size_t>(s)];
    if (flip_sectors) {
        std::swap(w.h, w.v);
    }
    return w;
}

SartOperator::SartOperator(const Sinogram &sino, int side, double pixel_size)
    : side_(side), pixel_size_(pixel_size), n_views_(sino.n_views), n_bins_(sino.n_bins),
      A_(projection_matrix(sino.geom, sino.view_angles, side, pixel_size)),
      b_(Eigen::Map<const Eigen::VectorXd>(sino.values.data(),
                                           static_cast<Eigen::Index>(sino.size()))),
      used_(sino.size(), 0), inv_row_(sino.size(), 0.0) {
    if (side < 1 || !(pixel_size > 0.0)) {
        throw DomainError("sart: bad image grid");
    }
    for (std::size_t i = 0; i < sino.size(); ++i) {
        const double row_sum = A_.row(static_cast<Eigen::Index>(i)).sum();
        if (sino.is_filled(i) && row_sum > 0.0) {
            used_[i] = 1;
            inv_row_[i] = 1.0 / row_sum;
        }
    }
    // spread consecutive updates over the circle
    int stride = std::max(1, static_cast<int>(std::lround(n_views_ * 0.381966)));
    while (std::gcd(stride, n_views_) != 1) {
        ++stride;
    }
    order_.resize(static_cast<std::size_t>(n_views_));
    for (int k = 0; k < n_views_; ++k) {
        order_[k] = static_cast<int>((static_cast<long long>(k) * stride) % n_views_);
    }
}

double SartOperator::residual_norm(const SliceImage &x) const {
    const Eigen::Map<const Eigen::VectorXd> xv(x.values.data(),
                                               static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd r = b_ - A_ * xv;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        if (used_[i]) {
            acc += r[i] * r[i];
        }
    }
    return std::sqrt(acc);
}

void SartOperator::sweep(SliceImage &x, double lambda, bool nonneg) const {
    if (x.side != side_) {
        throw DomainError("sart: image side does not match the operator");
    }
    if (lambda == 0.0) {
        return;
    }
    const std::size_t n = x.size();
    std::vector<double> num(n, 0.0);
    std::vector<double> den(n, 0.0);
    std::vector<int> touched;
    touched.reserve(n);
    double *xv = x.values.data();

    for (int v : order_) {
        touched.clear();
        for (int j = 0; j < n_bins_; ++j) {
            const Eigen::Index r = static_cast<Eigen::Index>(v) * n_bins_ + j;
            if (!used_[r]) {
                continue;
            }
            double proj = 0.0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A_, r); it; ++it) {
                proj += it.value() * xv[it.col()];
            }
            const double res = (b_[r] - proj) * inv_row_[r];
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A_, r); it; ++it) {
                const auto p = static_cast<std::size_t>(it.col());
                if (den[p] == 0.0) {
                    touched.push_back(static_cast<int>(p));
                }
                num[p] += it.value() * res;
                den[p] += it.value();
            }
        }
        for (int p : touched) {
            double val = xv[p] + lambda * num[p] / den[p];
            if (nonneg && val < 0.0) {
                val = 0.0;
            }
            xv[p] = val;
            num[p] = 0.0;
            den[p] = 0.0;
        }
    }
}

SliceImage sart_step(const SliceImage &x, const Sinogram &sino, double lambda, bool nonneg) {
    const SartOperator op(sino, x.side, x.pixel_size);
    SliceImage out = x;
    op.sweep(out, lambda, nonneg);
    return out;
}

namespace {

std::vector<GradientWeights> pixel_weights(const SliceImage &x, const AtvConfig &cfg) {
    std::vector<GradientWeights> w(x.size());
    for (int r = 0; r < x.side; ++r) {
        for (int c = 0; c < x.side; ++c) {
            w[static_cast<std::size_t>(r) * x.side + c] = cfg.weights(sector_of(x.x_of(c), x.y_of(r)));
        }
    }
    return w;
}

double tv_value(const SliceImage &x, const std::vector<GradientWeights> &w, double eps) {
    const int n = x.side;
    double acc = 0.0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * n + c;
            if (c + 1 < n) {
                const double d = x.values[p + 1] - x.values[p];
                acc += w[p].h * std::sqrt(d * d + eps * eps);
            }
            if (r + 1 < n) {
                const double d = x.values[p + n] - x.values[p];
                acc += w[p].v * std::sqrt(d * d + eps * eps);
            }
        }
    }
    return acc;
}

std::vector<double> tv_gradient(const SliceImage &x, const std::vector<GradientWeights> &w,
                                double eps) {
    const int n = x.side;
    std::vector<double> g(x.size(), 0.0);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * n + c;
            if (c + 1 < n) {
                const double d = x.values[p + 1] - x.values[p];
                const double s = w[p].h * d / std::sqrt(d * d + eps * eps);
                g[p] -= s;
                g[p + 1] += s;
            }
            if (r + 1 < n) {
                const double d = x.values[p + n] - x.values[p];
                const double s = w[p].v * d / std::sqrt(d * d + eps * eps);
                g[p] -= s;
                g[p + n] += s;
            }
        }
    }
    return g;
}

} // namespace

double weighted_tv(const SliceImage &x, const AtvConfig &cfg) {
    return tv_value(x, pixel_weights(x, cfg), cfg.epsilon);
}

std::vector<double> weighted_tv_gradient(const SliceImage &x, const AtvConfig &cfg) {
    return tv_gradient(x, pixel_weights(x, cfg), cfg.epsilon);
}

SliceImage weighted_atv_descent(const SliceImage &x, const AtvConfig &cfg, double step) {
    const auto w = pixel_weights(x, cfg);
    SliceImage cur = x;
    double f = tv_value(cur, w, cfg.epsilon);
    SliceImage trial = x;
    for (int k = 0; k < cfg.n_tv_steps && step > 0.0; ++k) {
        const auto g = tv_gradient(cur, w, cfg.epsilon);
        const double norm = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
        if (!(norm > 0.0)) {
            break;
        }
        bool accepted = false;
        for (int halving = 0; halving < 40; ++halving) {
            const double s = step / norm;
            for (std::size_t p = 0; p < g.size(); ++p) {
                trial.values[p] = cur.values[p] - s * g[p];
            }
            const double ft = tv_value(trial, w, cfg.epsilon);
            if (ft <= f) {
                std::swap(cur.values, trial.values);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }
    }
    return cur;
}

SliceImage weighted_atv_descent(const SliceImage &x, const AtvConfig &cfg) {
    return weighted_atv_descent(x, cfg, cfg.tv_step);
}

AtvResult reconstruct_atv(const Sinogram &sino, int side, double pixel_size,
                          const AtvConfig &cfg, const SliceImage &x0) {
    cfg.validate();
    sino.validate();
    const SartOperator op(sino, side, pixel_size);
    AtvResult out;
    out.image = x0.size() ? x0 : SliceImage(side, pixel_size, 0.0);
    if (out.image.side != side) {
        throw DomainError("atv: initial image has the wrong side");
    }
    SliceImage &x = out.image;
    double best = op.residual_norm(x);
    double last = best;
    for (int it = 0; it < cfg.n_sart_iters; ++it) {
        const std::vector<double> before = x.values;
        op.sweep(x, cfg.relaxation, cfg.nonneg);
        double moved = 0.0;
        for (std::size_t p = 0; p < x.size(); ++p) {
            const double d = x.values[p] - before[p];
            moved += d * d;
        }
        const double step = cfg.tv_step > 0.0 ? cfg.tv_step : cfg.tv_step_ratio * std::sqrt(moved);
        x = weighted_atv_descent(x, cfg, step);
        if (cfg.nonneg) {
            for (double &v : x.values) {
                v = std::max(v, 0.0);
            }
        }
        const double res = op.residual_norm(x);
        out.residual_history.push_back(res);
        out.tv_history.push_back(weighted_tv(x, cfg));
        out.iterations = it + 1;
        if (!std::isfinite(res) || (best > 0.0 && res > cfg.divergence_factor * best)) {
            std::ostringstream why;
            why << "atv: diverged at iteration " << it + 1 << " (residual " << res
                << ", minimum " << best << ")";
            throw NumericalError(why.str());
        }
        best = std::min(best, res);
        if (cfg.stop_tol > 0.0 && last > 0.0 && std::abs(last - res) / last < cfg.stop_tol) {
            break;
        }
        last = res;
    }
    return out;
}

std::string format_history(const AtvResult &result) {
    std::ostringstream os;
    os.precision(10);
    os << "# iteration residual tv\n";
    for (std::size_t k = 0; k < result.residual_history.size(); ++k) {
        os << k + 1 << ' ' << result.residual_history[k] << ' ' << result.tv_history[k] << '\n';
    }
    return os.str();
}

} // namespace tct
