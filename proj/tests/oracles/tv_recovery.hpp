#pragma once

// Brute-force TV recovery: solves min ||grad x||_1 s.t. A x = b with the dense
// simplex, then probes the optimal face along random directions so that a
// non-unique minimiser shows up as a large worst-case error.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "simplex.hpp"

namespace oracle {

struct RecoveryResult {
    bool solved = false;
    double tv_min = 0.0;
    double worst_rmse = 0.0; ///< over every probed point of the optimal face
    std::vector<double> x;
};

// Forward differences of a side x side image: horizontal then vertical, only
// pairs that lie inside the grid.
inline std::vector<std::pair<int, int>> difference_pairs(int side) {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c + 1 < side; ++c) {
            out.emplace_back(r * side + c, r * side + c + 1);
        }
    }
    for (int r = 0; r + 1 < side; ++r) {
        for (int c = 0; c < side; ++c) {
            out.emplace_back(r * side + c, (r + 1) * side + c);
        }
    }
    return out;
}

inline double total_variation(const std::vector<double> &x, int side) {
    double tv = 0.0;
    for (auto [i, j] : difference_pairs(side)) {
        tv += std::abs(x[j] - x[i]);
    }
    return tv;
}

// A is dense row-major (m x side^2); x_ref gives b = A x_ref.
inline RecoveryResult tv_recovery(const std::vector<std::vector<double>> &A,
                                  const std::vector<double> &x_ref, int side, int probes = 3,
                                  unsigned seed = 7) {
    const int n = side * side;
    const auto pairs = difference_pairs(side);
    const int k = static_cast<int>(pairs.size());
    const int m = static_cast<int>(A.size());
    std::vector<double> b(m, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            b[i] += A[i][j] * x_ref[j];
        }
    }
    // The difference rows get a tiny random right-hand side: without it almost
    // every basis is degenerate and the tableau stalls.
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> jitter(-1e-8, 1e-8);
    // columns: x+ (n), x- (n), s+ (k), s- (k), budget slack (1)
    const int nv = 2 * n + 2 * k + 1;
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;
    for (int i = 0; i < m; ++i) {
        std::vector<double> row(nv, 0.0);
        for (int j = 0; j < n; ++j) {
            row[j] = A[i][j];
            row[n + j] = -A[i][j];
        }
        rows.push_back(std::move(row));
        rhs.push_back(b[i]);
    }
    for (int e = 0; e < k; ++e) {
        std::vector<double> row(nv, 0.0);
        const auto [p, q] = pairs[e];
        row[q] += 1.0;
        row[p] -= 1.0;
        row[n + q] -= 1.0;
        row[n + p] += 1.0;
        row[2 * n + e] = -1.0;
        row[2 * n + k + e] = 1.0;
        rows.push_back(std::move(row));
        rhs.push_back(jitter(rng));
    }
    auto unpack = [&](const std::vector<double> &z) {
        std::vector<double> x(n);
        for (int j = 0; j < n; ++j) {
            x[j] = z[j] - z[n + j];
        }
        return x;
    };
    auto rmse = [&](const std::vector<double> &x) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            s += (x[j] - x_ref[j]) * (x[j] - x_ref[j]);
        }
        return std::sqrt(s / n);
    };

    RecoveryResult res;
    std::vector<double> cost(nv, 0.0);
    for (int e = 0; e < 2 * k; ++e) {
        cost[2 * n + e] = 1.0;
    }
    cost[nv - 1] = 0.0;
    const SimplexResult first = simplex_standard(rows, rhs, cost);
    if (first.status != SimplexStatus::optimal) {
        return res;
    }
    res.solved = true;
    res.tv_min = first.value;
    res.x = unpack(first.x);
    res.worst_rmse = rmse(res.x);

    // optimal face: sum s + slack = tv_min (1 + 1e-9) + 1e-9
    std::vector<double> budget(nv, 0.0);
    for (int e = 0; e < 2 * k; ++e) {
        budget[2 * n + e] = 1.0;
    }
    budget[nv - 1] = 1.0;
    rows.push_back(budget);
    rhs.push_back(res.tv_min * (1.0 + 1e-9) + 1e-9);

    std::normal_distribution<double> nd;
    for (int p = 0; p < probes; ++p) {
        std::vector<double> dir(n);
        for (double &d : dir) {
            d = nd(rng);
        }
        for (double sign : {1.0, -1.0}) {
            std::vector<double> c(nv, 0.0);
            for (int j = 0; j < n; ++j) {
                c[j] = sign * dir[j];
                c[n + j] = -sign * dir[j];
            }
            const SimplexResult r = simplex_standard(rows, rhs, c);
            if (r.status == SimplexStatus::unbounded) {
                res.worst_rmse = std::numeric_limits<double>::infinity();
                return res;
            }
            if (r.status != SimplexStatus::optimal) {
                res.solved = false;
                return res;
            }
            res.worst_rmse = std::max(res.worst_rmse, rmse(unpack(r.x)));
        }
    }
    return res;
}

} // namespace oracle
