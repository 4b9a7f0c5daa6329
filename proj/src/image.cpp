#include "tct/image.hpp"

#include <cmath>
#include <numeric>

namespace tct {

SliceImage::SliceImage(int side_, double pixel_size_, double fill)
    : side(side_), pixel_size(pixel_size_),
      values(static_cast<std::size_t>(side_) * side_, fill) {}

double SliceImage::sum() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
}

bool SliceImage::same_grid(const SliceImage &other) const {
    return side == other.side &&
           std::abs(pixel_size - other.pixel_size) <= 1e-12 * pixel_size;
}

std::vector<std::uint8_t> annulus_roi(int side, double pixel_size,
                                      const AnnulusSpec &ann) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side, 0);
    const double c = 0.5 * (side - 1);
    for (int row = 0; row < side; ++row) {
        for (int col = 0; col < side; ++col) {
            const double x = (col - c) * pixel_size - ann.center.x();
            const double y = (row - c) * pixel_size - ann.center.y();
            const double r = std::hypot(x, y);
            mask[static_cast<std::size_t>(row) * side + col] =
                (r >= ann.r_inner && r <= ann.r_outer) ? 1 : 0;
        }
    }
    return mask;
}

SliceImage scaled(const SliceImage &img, double factor) {
    SliceImage out = img;
    for (double &v : out.values) {
        v *= factor;
    }
    return out;
}

} // namespace tct
