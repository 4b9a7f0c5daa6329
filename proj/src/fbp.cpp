#include "tct/fbp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <fftw3.h>

#include "tct/error.hpp"

namespace tct {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) {
        p <<= 1;
    }
    return p;
}

// RAII around an fftw buffer
struct FftwBuf {
    double *re = nullptr;
    fftw_complex *cx = nullptr;
    FftwBuf(int n) {
        re = fftw_alloc_real(static_cast<std::size_t>(n));
        cx = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    }
    ~FftwBuf() {
        fftw_free(re);
        fftw_free(cx);
    }
    FftwBuf(const FftwBuf &) = delete;
    FftwBuf &operator=(const FftwBuf &) = delete;
};

// Backprojection weight of each view: half the angular gap to each neighbour
// on the circle, so uniform full scans get 2pi/n.
std::vector<double> view_weights(const std::vector<double> &angles) {
    const int n = static_cast<int>(angles.size());
    std::vector<double> w(angles.size(), 2.0 * pi / n);
    if (n < 3) {
        return w;
    }
    std::vector<int> order(angles.size());
    for (int i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return wrap_two_pi(angles[a]) < wrap_two_pi(angles[b]);
    });
    for (int k = 0; k < n; ++k) {
        const double prev = wrap_two_pi(angles[order[(k + n - 1) % n]]);
        const double cur = wrap_two_pi(angles[order[k]]);
        const double next = wrap_two_pi(angles[order[(k + 1) % n]]);
        const double gap_lo = wrap_two_pi(cur - prev);
        const double gap_hi = wrap_two_pi(next - cur);
        w[order[k]] = 0.5 * (gap_lo + gap_hi);
    }
    return w;
}

} // namespace

std::vector<double> ramp_filter_response(int padded, double spacing,
                                         const FbpOptions &opts) {
    if (padded < 2 || (padded & (padded - 1)) != 0) {
        throw DomainError("ramp filter: padded length must be a power of two");
    }
    if (!(opts.cutoff > 0.0 && opts.cutoff <= 1.0)) {
        throw ConfigError("ramp filter: cutoff must lie in (0, 1]");
    }
    FftwBuf buf(padded);
    // band-limited ramp in the spatial domain avoids the dc offset of a
    // sampled |f|
    for (int i = 0; i < padded; ++i) {
        const int k = i <= padded / 2 ? i : i - padded;
        double h = 0.0;
        if (k == 0) {
            h = 1.0 / (4.0 * spacing * spacing);
        } else if (k % 2 != 0) {
            h = -1.0 / (pi * pi * k * k * spacing * spacing);
        }
        buf.re[i] = h;
    }
    fftw_plan plan = fftw_plan_dft_r2c_1d(padded, buf.re, buf.cx, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    const int half = padded / 2;
    std::vector<double> response(static_cast<std::size_t>(half + 1));
    for (int k = 0; k <= half; ++k) {
        double w = 1.0;
        const double f = static_cast<double>(k) / half / opts.cutoff;
        if (opts.window == RampWindow::hann) {
            w = f >= 1.0 ? 0.0 : 0.5 * (1.0 + std::cos(pi * f));
        } else if (f > 1.0) {
            w = 0.0;
        }
        response[k] = buf.cx[k][0] * spacing * w;
    }
    return response;
}

SliceImage fbp_reconstruct(const Sinogram &sino, int side, double pixel_size,
                           const FbpOptions &opts) {
    sino.validate();
    if (side < 1 || !(pixel_size > 0.0)) {
        throw DomainError("fbp: invalid output grid");
    }
    if (sino.n_views < 2) {
        throw DomainError("fbp: need at least two views");
    }
    const ScanGeometry &g = sino.geom;
    const double scale = g.sod / g.sdd; // detector -> isocentre plane
    const double tau = g.bin_pitch * scale;
    const int nb = sino.n_bins;
    const int padded = next_pow2(2 * nb);
    const auto response = ramp_filter_response(padded, tau, opts);

    std::vector<double> filtered(sino.values.size());
    {
        FftwBuf buf(padded);
        fftw_plan fwd = fftw_plan_dft_r2c_1d(padded, buf.re, buf.cx, FFTW_ESTIMATE);
        fftw_plan inv = fftw_plan_dft_c2r_1d(padded, buf.cx, buf.re, FFTW_ESTIMATE);
        for (int v = 0; v < sino.n_views; ++v) {
            std::fill(buf.re, buf.re + padded, 0.0);
            for (int j = 0; j < nb; ++j) {
                const double u = g.bin_u(j) * scale;
                buf.re[j] = sino.at(v, j) * g.sod / std::sqrt(g.sod * g.sod + u * u);
            }
            fftw_execute(fwd);
            for (int k = 0; k <= padded / 2; ++k) {
                buf.cx[k][0] *= response[k];
                buf.cx[k][1] *= response[k];
            }
            fftw_execute(inv);
            for (int j = 0; j < nb; ++j) {
                filtered[sino.index(v, j)] = buf.re[j] / padded;
            }
        }
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
    }

    const auto dbeta = view_weights(sino.view_angles);
    std::vector<double> cosb(sino.n_views), sinb(sino.n_views);
    for (int v = 0; v < sino.n_views; ++v) {
        cosb[v] = std::cos(sino.view_angles[v]);
        sinb[v] = std::sin(sino.view_angles[v]);
    }
    const double centre_bin = 0.5 * (nb - 1) - g.detector_offset;

    SliceImage out(side, pixel_size, 0.0);
#pragma omp parallel for schedule(static)
    for (int row = 0; row < side; ++row) {
        const double y = out.y_of(row);
        for (int col = 0; col < side; ++col) {
            const double x = out.x_of(col);
            double acc = 0.0;
            for (int v = 0; v < sino.n_views; ++v) {
                const double along = g.sod - (x * cosb[v] + y * sinb[v]);
                const double across = -x * sinb[v] + y * cosb[v];
                const double u = g.sod * across / along; // isocentre plane
                const double t = u / tau + centre_bin;
                const int j0 = static_cast<int>(std::floor(t));
                if (j0 < 0 || j0 + 1 >= nb) {
                    if (j0 == nb - 1 && t <= nb - 1) {
                        acc += dbeta[v] * g.sod * g.sod / (along * along) *
                               filtered[sino.index(v, j0)];
                    }
                    continue;
                }
                const double f = t - j0;
                const double q = (1.0 - f) * filtered[sino.index(v, j0)] +
                                 f * filtered[sino.index(v, j0 + 1)];
                acc += dbeta[v] * g.sod * g.sod / (along * along) * q;
            }
            out.at(row, col) = 0.5 * acc;
        }
    }
    return out;
}

} // namespace tct
