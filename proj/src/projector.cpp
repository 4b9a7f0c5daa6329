#include "tct/projector.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tct/error.hpp"

namespace tct {

Sinogram::Sinogram(const ScanGeometry &g, std::vector<double> angles)
    : n_views(static_cast<int>(angles.size())), n_bins(g.n_bins), geom(g),
      view_angles(std::move(angles)),
      values(static_cast<std::size_t>(n_views) * n_bins, 0.0),
      measured(values.size(), 0), estimated(values.size(), 0), mirrored(values.size(), 0) {}

std::size_t Sinogram::measured_count() const {
    return static_cast<std::size_t>(
        std::count_if(measured.begin(), measured.end(), [](auto m) { return m != 0; }));
}

bool Sinogram::complete() const {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!is_filled(i)) {
            return false;
        }
    }
    return true;
}

void Sinogram::zero_unmeasured() {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!measured[i]) {
            values[i] = 0.0;
            estimated[i] = 0;
            mirrored[i] = 0;
        }
    }
}

void Sinogram::validate() const {
    const std::size_t n = static_cast<std::size_t>(n_views) * n_bins;
    if (n_views < 1 || n_bins < 1 || n_bins != geom.n_bins ||
        view_angles.size() != static_cast<std::size_t>(n_views) ||
        values.size() != n || measured.size() != n || estimated.size() != n ||
        mirrored.size() != n) {
        throw FormatError("sinogram: inconsistent dimensions");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw FormatError("sinogram: non-finite sample");
        }
    }
}

Sinogram forward_project(const SliceImage &img, const ScanGeometry &geom,
                         std::span<const double> angles) {
    geom.validate();
    Sinogram sino(geom, std::vector<double>(angles.begin(), angles.end()));
    const PixelGrid grid = grid_of(img);
    const double *x = img.values.data();
#pragma omp parallel for schedule(static)
    for (int v = 0; v < sino.n_views; ++v) {
        const double beta = sino.view_angles[v];
        const Vec2 src = geom.source(beta);
        for (int j = 0; j < geom.n_bins; ++j) {
            double acc = 0.0;
            trace_ray(grid, src, geom.detector_point(beta, j),
                      [&](int p, double len) { acc += len * x[p]; });
            sino.at(v, j) = acc;
        }
    }
    std::fill(sino.measured.begin(), sino.measured.end(), 1);
    return sino;
}

Sinogram forward_project(const SliceImage &img, const ScanGeometry &geom) {
    const auto angles = geom.full_view_angles();
    return forward_project(img, geom, angles);
}

Eigen::SparseMatrix<double, Eigen::RowMajor>
projection_matrix(const ScanGeometry &geom, std::span<const double> angles, int side,
                  double pixel_size) {
    geom.validate();
    const PixelGrid grid{side, pixel_size};
    const int n_views = static_cast<int>(angles.size());
    const int n_bins = geom.n_bins;
    std::vector<std::vector<Eigen::Triplet<double>>> per_view(static_cast<std::size_t>(n_views));
#pragma omp parallel for schedule(static)
    for (int v = 0; v < n_views; ++v) {
        const Vec2 src = geom.source(angles[v]);
        auto &trips = per_view[v];
        for (int j = 0; j < n_bins; ++j) {
            const int row = v * n_bins + j;
            trace_ray(grid, src, geom.detector_point(angles[v], j),
                      [&](int p, double len) { trips.emplace_back(row, p, len); });
        }
    }
    std::vector<Eigen::Triplet<double>> all;
    std::size_t total = 0;
    for (const auto &t : per_view) {
        total += t.size();
    }
    all.reserve(total);
    for (const auto &t : per_view) {
        all.insert(all.end(), t.begin(), t.end());
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> A(static_cast<Eigen::Index>(n_views) * n_bins,
                                                   static_cast<Eigen::Index>(side) * side);
    A.setFromTriplets(all.begin(), all.end());
    return A;
}

SliceImage backproject(const Sinogram &sino, int side, double pixel_size) {
    if (sino.n_views < 1) {
        throw DomainError("backproject: empty sinogram");
    }
    SliceImage out(side, pixel_size, 0.0);
    const PixelGrid grid{side, pixel_size};
    double *x = out.values.data();
    for (int v = 0; v < sino.n_views; ++v) {
        const double beta = sino.view_angles[v];
        const Vec2 src = sino.geom.source(beta);
        for (int j = 0; j < sino.n_bins; ++j) {
            const double p = sino.at(v, j);
            if (p == 0.0) {
                continue;
            }
            trace_ray(grid, src, sino.geom.detector_point(beta, j),
                      [&](int pix, double len) { x[pix] += len * p; });
        }
    }
    return out;
}

BinBand tangential_band(const ScanGeometry &geom, const AnnulusSpec &ann,
                        double d_prime, const TangentialMaskOptions &opts) {
    geom.validate();
    ann.validate();
    if (d_prime < 0.0) {
        throw DomainError("tangential_mask: negative detector extension");
    }
    const double d = tilt_depth_for_extension(geom, ann.r_inner, d_prime);
    const double s_lo = ann.r_inner - d;
    const double u_hi = ann.r_outer * geom.sdd /
                            std::sqrt(geom.sod * geom.sod - ann.r_outer * ann.r_outer) +
                        opts.margin_bins * geom.bin_pitch;
    BinBand band{geom.n_bins, -1};
    for (int j = 0; j < geom.n_bins; ++j) {
        // tiny slack so a ray exactly at the tangent counts as measured
        if (geom.ray_offset(j) >= s_lo - 1e-9 * ann.r_inner &&
            geom.bin_u(j) <= u_hi + 1e-9 * geom.bin_pitch) {
            band.first = std::min(band.first, j);
            band.last = std::max(band.last, j);
        }
    }
    if (band.last < band.first) {
        std::ostringstream why;
        why << "tangential_mask: no detector bin sees the wall (inner tangent "
            << s_lo << " mm)";
        throw GeometryError(why.str());
    }
    return band;
}

std::vector<std::uint8_t> tangential_mask(const ScanGeometry &geom,
                                          const AnnulusSpec &ann,
                                          double d_prime, int n_views,
                                          const TangentialMaskOptions &opts) {
    const BinBand band = tangential_band(geom, ann, d_prime, opts);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(geom.n_bins), 0);
    for (int j = band.first; j <= band.last; ++j) {
        row[j] = 1;
    }
    if (opts.both_sides) {
        for (int j = 0; j < geom.n_bins; ++j) {
            const double mirrored = geom.bin_for_offset(-geom.ray_offset(j));
            const int k = static_cast<int>(std::lround(mirrored));
            if (k >= band.first && k <= band.last) {
                row[j] = 1;
            }
        }
    }
    std::vector<std::uint8_t> mask;
    mask.reserve(row.size() * static_cast<std::size_t>(n_views));
    for (int v = 0; v < n_views; ++v) {
        mask.insert(mask.end(), row.begin(), row.end());
    }
    return mask;
}

void apply_mask(Sinogram &sino, std::span<const std::uint8_t> mask) {
    if (mask.size() != sino.values.size()) {
        throw FormatError("apply_mask: mask shape does not match the sinogram");
    }
    for (std::size_t i = 0; i < mask.size(); ++i) {
        sino.measured[i] = mask[i] ? 1 : 0;
        sino.estimated[i] = 0;
        sino.mirrored[i] = 0;
        if (!mask[i]) {
            sino.values[i] = 0.0;
        }
    }
}

Sinogram apply_poisson_noise(const Sinogram &sino, const NoiseModel &noise) {
    if (!(noise.incident_photons > 0.0)) {
        throw ConfigError("noise: incident photon count must be positive");
    }
    Sinogram out = sino;
    const double n0 = noise.incident_photons;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < sino.n_views; ++v) {
        // one stream per view keeps the result independent of the thread count
        std::seed_seq seq{static_cast<std::uint32_t>(noise.seed),
                          static_cast<std::uint32_t>(noise.seed >> 32),
                          static_cast<std::uint32_t>(v)};
        std::mt19937_64 rng(seq);
        for (int j = 0; j < sino.n_bins; ++j) {
            const std::size_t i = sino.index(v, j);
            if (!sino.measured[i]) {
                continue;
            }
            const double mean = n0 * std::exp(-std::max(0.0, sino.values[i]));
            std::poisson_distribution<long long> counts(mean);
            const long long k = mean > 0.0 ? counts(rng) : 0;
            out.values[i] = -std::log(static_cast<double>(std::max<long long>(k, 1)) / n0);
        }
    }
    return out;
}

} // namespace tct
