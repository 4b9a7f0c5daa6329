#pragma once

#include <cstdint>
#include <vector>

#include "tct/geometry.hpp"

namespace tct {

/**
 * Square slice of attenuation values centred on the isocenter.
 *
 * Pixel (row, col) has its centre at x = (col - (side-1)/2) * pixel_size and
 * y = (row - (side-1)/2) * pixel_size. Values are stored row-major.
 */
struct SliceImage {
    int side = 0;
    double pixel_size = 1.0;
    std::vector<double> values;
    std::vector<std::uint8_t> roi_mask; ///< empty when no ROI is attached

    SliceImage() = default;
    SliceImage(int side_, double pixel_size_, double fill = 0.0);

    std::size_t size() const { return values.size(); }
    bool has_roi() const { return !roi_mask.empty(); }

    double &at(int row, int col) {
        return values[static_cast<std::size_t>(row) * side + col];
    }
    double at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * side + col];
    }

    double x_of(int col) const { return (col - 0.5 * (side - 1)) * pixel_size; }
    double y_of(int row) const { return (row - 0.5 * (side - 1)) * pixel_size; }
    double extent() const { return side * pixel_size; }

    double sum() const;
    bool same_grid(const SliceImage &other) const;
};

/// ROI mask of pixels whose centre lies within the annulus wall, with a
/// half-pixel tolerance on both boundaries.
std::vector<std::uint8_t> annulus_roi(int side, double pixel_size,
                                      const AnnulusSpec &ann);

/// The image with every value multiplied by @p factor (ROI kept).
SliceImage scaled(const SliceImage &img, double factor);

} // namespace tct
