#include "doctest.h"

#include <random>

#include "../oracles/simplex.hpp"
#include "tct/linprog.hpp"

using namespace tct;

namespace {

struct RandomLp {
    LinearProgram lp;
    double reference = 0.0;
    bool reference_ok = false;
};

// Bounded LP with a known feasible point, solved independently by the tableau
// simplex after shifting x = lower + y and adding slacks for y <= upper - lower.
RandomLp make_lp(unsigned seed, int m, int n) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RandomLp out;
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            if (u(rng) > 0.2) {
                K(i, j) = u(rng);
                trips.emplace_back(i, j, K(i, j));
            }
        }
    }
    Eigen::VectorXd lo(n), hi(n), x0(n), c(n);
    for (int j = 0; j < n; ++j) {
        lo[j] = -1.0 - std::abs(u(rng));
        hi[j] = 1.0 + std::abs(u(rng));
        x0[j] = 0.5 * u(rng);
        c[j] = u(rng);
    }
    out.lp.K.resize(m, n);
    out.lp.K.setFromTriplets(trips.begin(), trips.end());
    out.lp.b = K * x0;
    out.lp.cost = c;
    out.lp.lower = lo;
    out.lp.upper = hi;

    // standard form: [K 0; I I] [y; s] = [b - K lo; hi - lo]
    std::vector<std::vector<double>> A(m + n, std::vector<double>(2 * n, 0.0));
    std::vector<double> rhs(m + n);
    std::vector<double> cost(2 * n, 0.0);
    const Eigen::VectorXd shifted = out.lp.b - K * lo;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            A[i][j] = K(i, j);
        }
        rhs[i] = shifted[i];
    }
    for (int j = 0; j < n; ++j) {
        A[m + j][j] = 1.0;
        A[m + j][n + j] = 1.0;
        rhs[m + j] = hi[j] - lo[j];
        cost[j] = c[j];
    }
    const oracle::SimplexResult ref = oracle::simplex_standard(A, rhs, cost);
    out.reference_ok = ref.status == oracle::SimplexStatus::optimal;
    out.reference = ref.value + c.dot(lo);
    return out;
}

} // namespace

TEST_SUITE("linprog") {

TEST_CASE("interior point matches the simplex reference") {
    for (unsigned seed = 0; seed < 12; ++seed) {
        const int m = 5 + static_cast<int>(seed % 4) * 5;
        const RandomLp r = make_lp(seed, m, 2 * m + 3);
        REQUIRE(r.reference_ok);
        const LpResult res = solve_lp(r.lp);
        REQUIRE(res.status == LpStatus::optimal);
        CHECK(res.objective == doctest::Approx(r.reference).epsilon(1e-6));
        const Eigen::VectorXd resid = r.lp.K * res.x - r.lp.b;
        CHECK(resid.norm() <= 1e-6 * (1.0 + r.lp.b.norm()));
        for (Eigen::Index j = 0; j < res.x.size(); ++j) {
            CHECK(res.x[j] >= r.lp.lower[j] - 1e-7);
            CHECK(res.x[j] <= r.lp.upper[j] + 1e-7);
        }
        CHECK(res.dual_objective <= res.objective + 1e-6 * (1.0 + std::abs(res.objective)));
    }
}

TEST_CASE("redundant equality rows are tolerated") {
    RandomLp r = make_lp(99, 6, 15);
    Eigen::SparseMatrix<double> K2(12, 15);
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < r.lp.K.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(r.lp.K, k); it; ++it) {
            trips.emplace_back(it.row(), it.col(), it.value());
            trips.emplace_back(it.row() + 6, it.col(), 2.0 * it.value());
        }
    }
    K2.setFromTriplets(trips.begin(), trips.end());
    Eigen::VectorXd b2(12);
    b2 << r.lp.b, 2.0 * r.lp.b;
    r.lp.K = K2;
    r.lp.b = b2;
    const LpResult res = solve_lp(r.lp);
    REQUIRE(res.status == LpStatus::optimal);
    CHECK(res.objective == doctest::Approx(r.reference).epsilon(1e-6));
}

TEST_CASE("infeasible program is reported") {
    LinearProgram lp;
    lp.K.resize(1, 2);
    std::vector<Eigen::Triplet<double>> t{{0, 0, 1.0}, {0, 1, 1.0}};
    lp.K.setFromTriplets(t.begin(), t.end());
    lp.b = Eigen::VectorXd::Constant(1, 5.0);
    lp.cost = Eigen::VectorXd::Ones(2);
    lp.lower = Eigen::VectorXd::Zero(2);
    lp.upper = Eigen::VectorXd::Ones(2);
    const LpResult res = solve_lp(lp);
    CHECK(res.status != LpStatus::optimal);
}

TEST_CASE("iteration cap is reported, not hidden") {
    const RandomLp r = make_lp(3, 20, 43);
    LpOptions opts;
    opts.max_iterations = 2;
    const LpResult res = solve_lp(r.lp, opts);
    CHECK(res.status == LpStatus::iteration_limit);
    CHECK(std::string(to_string(res.status)).size() > 0);
}

TEST_CASE("invalid programs are rejected") {
    LinearProgram lp;
    lp.K.resize(1, 2);
    lp.b = Eigen::VectorXd::Zero(1);
    lp.cost = Eigen::VectorXd::Zero(2);
    lp.lower = Eigen::VectorXd::Constant(2, 1.0);
    lp.upper = Eigen::VectorXd::Zero(2);
    CHECK_THROWS(lp.validate());
}

}
