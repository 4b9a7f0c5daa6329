#include "tct/completion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tct/error.hpp"

namespace tct {

namespace {

void check_table(const Sinogram &sino, const LengthTable &lengths) {
    if (lengths.n_views != sino.n_views || lengths.n_bins != sino.n_bins) {
        throw FormatError("completion: length table does not match the sinogram");
    }
}

// Uniform full-circle grid: angle_k = angle_0 + k * 2pi / n.
double uniform_step(const Sinogram &sino) {
    const double step = 2.0 * pi / sino.n_views;
    for (int k = 0; k < sino.n_views; ++k) {
        const double expected = sino.view_angles[0] + k * step;
        if (std::abs(sino.view_angles[k] - expected) > 1e-9) {
            throw GeometryError("mirroring needs a uniform full-circle view grid");
        }
    }
    return step;
}

double median(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

std::vector<double> bin_weights(const ScanGeometry &g, int n_bins, bool jacobian) {
    std::vector<double> w(static_cast<std::size_t>(n_bins), 1.0);
    if (jacobian) {
        for (int j = 0; j < n_bins; ++j) {
            w[j] = std::pow(std::cos(g.fan_angle(j)), 3);
        }
    }
    return w;
}

} // namespace

double estimate_mean_attenuation(const Sinogram &sino, const LengthTable &lengths) {
    check_table(sino, lengths);
    double p_sum = 0.0;
    double l_sum = 0.0;
    for (std::size_t i = 0; i < sino.size(); ++i) {
        if (sino.measured[i]) {
            p_sum += sino.values[i];
            l_sum += lengths.values[i];
        }
    }
    if (!(l_sum > 0.0)) {
        throw DomainError("mean attenuation: no measured ray crosses the annulus");
    }
    return p_sum / l_sum;
}

Sinogram extrapolate_to_half_scan(const Sinogram &sino, const LengthTable &lengths,
                                  double u_bar) {
    check_table(sino, lengths);
    if (u_bar < 0.0) {
        throw DomainError("extrapolation: negative mean attenuation");
    }
    Sinogram out = sino;
    for (int j = 0; j < sino.n_bins; ++j) {
        if (sino.geom.bin_u(j) < 0.0) {
            continue;
        }
        for (int v = 0; v < sino.n_views; ++v) {
            const std::size_t i = sino.index(v, j);
            if (!out.is_filled(i)) {
                out.values[i] = u_bar * lengths.values[i];
                out.estimated[i] = 1;
            }
        }
    }
    return out;
}

Sinogram extrapolate_to_half_scan(const Sinogram &sino, const AnnulusSpec &ann,
                                  double u_bar) {
    return extrapolate_to_half_scan(sino, ray_annulus_lengths(sino.geom, ann, sino.view_angles),
                                    u_bar);
}

Sinogram mirror_to_full_scan(const Sinogram &sino, int *fallbacks) {
    sino.validate();
    const ScanGeometry &g = sino.geom;
    const double step = uniform_step(sino);
    const int nv = sino.n_views;
    const int nb = sino.n_bins;
    Sinogram out = sino;
    int fallback_count = 0;

    auto wrap_view = [nv](int v) { return ((v % nv) + nv) % nv; };

    for (int j = 0; j < nb; ++j) {
        const double gamma = g.fan_angle(j);
        const double fb = g.bin_for_offset(-g.ray_offset(j));
        for (int v = 0; v < nv; ++v) {
            const std::size_t i = sino.index(v, j);
            if (sino.is_filled(i)) {
                continue;
            }
            const auto conj = conjugate_ray(g, gamma, sino.view_angles[v]);
            const double fv = wrap_two_pi(conj.second - sino.view_angles[0]) / step;
            const int v0 = static_cast<int>(std::floor(fv));
            const int b0 = static_cast<int>(std::floor(fb));
            const double tv = fv - v0;
            const double tb = fb - b0;

            double acc = 0.0;
            bool ok = b0 >= 0 && b0 + 1 < nb + (tb == 0.0 ? 1 : 0);
            bool any_estimated = false;
            if (ok) {
                for (int dv = 0; dv < 2 && ok; ++dv) {
                    for (int db = 0; db < 2; ++db) {
                        const double w = (dv ? tv : 1.0 - tv) * (db ? tb : 1.0 - tb);
                        if (w == 0.0) {
                            continue;
                        }
                        const int bb = b0 + db;
                        if (bb < 0 || bb >= nb) {
                            ok = false;
                            break;
                        }
                        const std::size_t src = sino.index(wrap_view(v0 + dv), bb);
                        if (!sino.is_filled(src)) {
                            ok = false;
                            break;
                        }
                        acc += w * sino.values[src];
                        any_estimated |= sino.estimated[src] != 0;
                    }
                }
            }
            if (!ok) {
                // nearest filled sample, searching outward along the detector
                ++fallback_count;
                const int vn = wrap_view(static_cast<int>(std::lround(fv)));
                const int bn = std::clamp(static_cast<int>(std::lround(fb)), 0, nb - 1);
                bool found = false;
                for (int r = 0; r < nb && !found; ++r) {
                    for (int sgn : {1, -1}) {
                        const int bb = bn + sgn * r;
                        if (bb < 0 || bb >= nb) {
                            continue;
                        }
                        const std::size_t src = sino.index(vn, bb);
                        if (sino.is_filled(src)) {
                            acc = sino.values[src];
                            any_estimated = sino.estimated[src] != 0;
                            found = true;
                            break;
                        }
                    }
                }
                if (!found) {
                    throw GeometryError("mirroring: the conjugate view holds no data");
                }
            }
            out.values[i] = acc;
            if (any_estimated) {
                out.estimated[i] = 1;
            } else {
                out.mirrored[i] = 1;
            }
        }
    }
    if (fallbacks) {
        *fallbacks = fallback_count;
    }
    return out;
}

std::vector<double> view_integrals(const Sinogram &sino, const CompletionOptions &opts) {
    const auto w = bin_weights(sino.geom, sino.n_bins, opts.fan_jacobian);
    std::vector<double> out(static_cast<std::size_t>(sino.n_views), 0.0);
    for (int v = 0; v < sino.n_views; ++v) {
        double acc = 0.0;
        for (int j = 0; j < sino.n_bins; ++j) {
            acc += w[j] * sino.at(v, j);
        }
        out[v] = acc;
    }
    return out;
}

Sinogram enforce_consistency(const Sinogram &sino, const LengthTable &lengths,
                             double const_target, CompletionReport &report,
                             const CompletionOptions &opts) {
    check_table(sino, lengths);
    const auto w = bin_weights(sino.geom, sino.n_bins, opts.fan_jacobian);
    const auto integrals = view_integrals(sino, opts);
    if (std::isnan(const_target)) {
        const_target = median(integrals);
    }
    report.const_estimate = const_target;
    report.per_view_alpha.assign(static_cast<std::size_t>(sino.n_views), 0.0);
    report.skipped_views.clear();
    report.clamped_samples = 0;

    Sinogram out = sino;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < sino.n_views; ++v) {
        double support = 0.0;
        for (int j = 0; j < sino.n_bins; ++j) {
            const std::size_t i = sino.index(v, j);
            if (sino.estimated[i]) {
                support += w[j] * lengths.values[i];
            }
        }
        if (!(support > 0.0)) {
            continue;
        }
        const double alpha = (const_target - integrals[v]) / support;
        report.per_view_alpha[v] = alpha;
        for (int j = 0; j < sino.n_bins; ++j) {
            const std::size_t i = sino.index(v, j);
            if (sino.estimated[i]) {
                out.values[i] = sino.values[i] + alpha * lengths.values[i];
            }
        }
    }
    // bookkeeping kept serial so the report does not depend on threading
    for (int v = 0; v < sino.n_views; ++v) {
        bool any = false;
        for (int j = 0; j < sino.n_bins; ++j) {
            const std::size_t i = sino.index(v, j);
            if (sino.estimated[i]) {
                any |= w[j] * lengths.values[i] > 0.0;
                if (out.values[i] < 0.0) {
                    out.values[i] = 0.0;
                    ++report.clamped_samples;
                }
            }
        }
        if (!any) {
            report.skipped_views.push_back(v);
        }
    }
    return out;
}

Sinogram complete_sinogram(const Sinogram &sino, const AnnulusSpec &ann,
                           CompletionReport &report, const CompletionOptions &opts) {
    const LengthTable lengths = ray_annulus_lengths(sino.geom, ann, sino.view_angles);
    report.u_bar = estimate_mean_attenuation(sino, lengths);
    if (sino.complete()) {
        // nothing left to fill; re-running the consistency step would only
        // shuffle rounding in the estimated samples
        return sino;
    }
    const Sinogram half = extrapolate_to_half_scan(sino, lengths, report.u_bar);
    const Sinogram full = mirror_to_full_scan(half, &report.mirror_fallbacks);
    return enforce_consistency(full, lengths, std::numeric_limits<double>::quiet_NaN(), report,
                               opts);
}

} // namespace tct
