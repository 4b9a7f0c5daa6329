#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "tct/geometry.hpp"
#include "tct/image.hpp"
#include "tct/ray_trace.hpp"
#include "tct/sinogram.hpp"

namespace tct {

inline PixelGrid grid_of(const SliceImage &img) {
    return {img.side, img.pixel_size};
}

/// Line integrals of @p img along every fan ray. All samples are marked
/// measured.
Sinogram forward_project(const SliceImage &img, const ScanGeometry &geom,
                         std::span<const double> angles);

/// Forward projection over the geometry's full angular grid.
Sinogram forward_project(const SliceImage &img, const ScanGeometry &geom);

/// The forward projector as an explicit views*bins x side^2 matrix, rows in
/// sinogram order.
Eigen::SparseMatrix<double, Eigen::RowMajor>
projection_matrix(const ScanGeometry &geom, std::span<const double> angles, int side,
                  double pixel_size);

/// Exact transpose of forward_project: every sample is smeared back along its
/// ray with the same intersection lengths. Unmeasured samples count too.
SliceImage backproject(const Sinogram &sino, int side, double pixel_size);

struct TangentialMaskOptions {
    double margin_bins = 2.0; ///< kept beyond the outer tangent
    bool both_sides = false;
};

/// Views x bins mask of the tangential band. @p d_prime is the detector
/// extension in mm measured in the detector plane.
std::vector<std::uint8_t> tangential_mask(const ScanGeometry &geom,
                                          const AnnulusSpec &ann,
                                          double d_prime, int n_views,
                                          const TangentialMaskOptions &opts = {});

/// First and last measured bin of the (single-sided) band.
struct BinBand {
    int first = 0;
    int last = -1;
    int width() const { return last - first + 1; }
};
BinBand tangential_band(const ScanGeometry &geom, const AnnulusSpec &ann,
                        double d_prime, const TangentialMaskOptions &opts = {});

/// Restricts @p sino to @p mask; samples outside are zeroed and unmarked.
void apply_mask(Sinogram &sino, std::span<const std::uint8_t> mask);

struct NoiseModel {
    double incident_photons = 2.0e5;
    std::uint64_t seed = 0;
};

/// Poisson counting noise on measured samples, log-transformed back to line
/// integrals. Unmeasured samples are untouched. Deterministic in the seed.
Sinogram apply_poisson_noise(const Sinogram &sino, const NoiseModel &noise);

} // namespace tct
