#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "tct/geometry.hpp"
#include "tct/image.hpp"

namespace testing {

// Disk of radius r (mm) sampled by 4x4 sub-pixels per pixel.
inline tct::SliceImage disk_image(int side, double pixel, double r, double value = 1.0) {
    tct::SliceImage img(side, pixel, 0.0);
    for (int row = 0; row < side; ++row) {
        for (int col = 0; col < side; ++col) {
            int inside = 0;
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    const double x = img.x_of(col) + (b - 1.5) / 4.0 * pixel;
                    const double y = img.y_of(row) + (a - 1.5) / 4.0 * pixel;
                    inside += x * x + y * y <= r * r;
                }
            }
            img.at(row, col) = value * inside / 16.0;
        }
    }
    return img;
}

inline tct::SliceImage random_image(int side, double pixel, unsigned seed, double lo = 0.0,
                                    double hi = 1.0) {
    tct::SliceImage img(side, pixel, 0.0);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double &v : img.values) {
        v = u(rng);
    }
    return img;
}

inline double max_abs_diff(const std::vector<double> &a, const std::vector<double> &b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace testing
