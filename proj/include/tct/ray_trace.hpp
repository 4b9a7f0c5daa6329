#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "tct/geometry.hpp"

namespace tct {

/// Square pixel grid centred on the isocenter.
struct PixelGrid {
    int side = 0;
    double pixel_size = 1.0;

    double lo() const { return -0.5 * side * pixel_size; }
    double hi() const { return 0.5 * side * pixel_size; }
    int n_pixels() const { return side * side; }
};

/**
 * Exact segment-grid traversal (incremental Siddon). Calls
 * visit(pixel_index, length) once per pixel crossed by the segment a->b, in
 * order along the ray. Zero-length touches are skipped.
 */
template <typename Visit>
void trace_ray(const PixelGrid &grid, const Vec2 &a, const Vec2 &b,
               Visit &&visit) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Vec2 d = b - a;
    const double length = d.norm();
    if (length <= 0.0) {
        return;
    }
    const double lo = grid.lo();
    const double hi = grid.hi();
    const double px = grid.pixel_size;

    double t0 = 0.0;
    double t1 = 1.0;
    for (int axis = 0; axis < 2; ++axis) {
        const double start = a[axis];
        const double step = d[axis];
        if (step == 0.0) {
            if (start <= lo || start >= hi) {
                return;
            }
            continue;
        }
        double ta = (lo - start) / step;
        double tb = (hi - start) / step;
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 < t1)) {
        return;
    }

    int index[2];
    int dir[2];
    double t_next[2];
    double t_delta[2];
    for (int axis = 0; axis < 2; ++axis) {
        const double step = d[axis];
        const double f = (a[axis] + t0 * step - lo) / px;
        int i;
        if (step > 0.0) {
            i = static_cast<int>(std::floor(f));
        } else if (step < 0.0) {
            i = static_cast<int>(std::ceil(f)) - 1;
        } else {
            i = static_cast<int>(std::floor(f));
        }
        i = std::clamp(i, 0, grid.side - 1);
        index[axis] = i;
        if (step > 0.0) {
            dir[axis] = 1;
            t_next[axis] = (lo + (i + 1) * px - a[axis]) / step;
            t_delta[axis] = px / step;
        } else if (step < 0.0) {
            dir[axis] = -1;
            t_next[axis] = (lo + i * px - a[axis]) / step;
            t_delta[axis] = -px / step;
        } else {
            dir[axis] = 0;
            t_next[axis] = inf;
            t_delta[axis] = inf;
        }
    }

    double t = t0;
    while (t < t1) {
        const int axis = t_next[0] <= t_next[1] ? 0 : 1;
        const double t_end = std::min(t_next[axis], t1);
        if (t_end > t) {
            // index[0] is the column (x), index[1] the row (y)
            visit(index[1] * grid.side + index[0], (t_end - t) * length);
            t = t_end;
        }
        if (t >= t1) {
            break;
        }
        index[axis] += dir[axis];
        t_next[axis] += t_delta[axis];
        if (index[axis] < 0 || index[axis] >= grid.side) {
            break;
        }
    }
}

} // namespace tct
