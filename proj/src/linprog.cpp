#include "tct/linprog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tct/error.hpp"

namespace tct {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

const char *to_string(LpStatus s) {
    switch (s) {
    case LpStatus::optimal:
        return "optimal";
    case LpStatus::infeasible:
        return "infeasible";
    case LpStatus::iteration_limit:
        return "iteration_limit";
    case LpStatus::numerical_failure:
        return "numerical_failure";
    }
    return "unknown";
}

void LinearProgram::validate() const {
    const auto n = K.cols();
    if (b.size() != K.rows() || cost.size() != n || lower.size() != n ||
        upper.size() != n) {
        throw DomainError("linear program: inconsistent dimensions");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]) || lower[j] > upper[j]) {
            throw DomainError("linear program: bounds must be finite with lower <= upper");
        }
    }
}

namespace {

double max_step(const VectorXd &v, const VectorXd &dv) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv[i] < 0.0) {
            a = std::min(a, -v[i] / dv[i]);
        }
    }
    return a;
}

} // namespace

void SparseConstraint::normal_matrix(const VectorXd &d, MatrixXd &N) const {
    const SpMat &K = K_;
    N.setZero();
    std::vector<Eigen::Index> rows;
    std::vector<double> vals;
    for (Eigen::Index j = 0; j < K.outerSize(); ++j) {
        rows.clear();
        vals.clear();
        for (SpMat::InnerIterator it(K, j); it; ++it) {
            rows.push_back(it.row());
            vals.push_back(it.value());
        }
        const double w = d[j];
        const std::size_t m = rows.size();
        for (std::size_t a = 0; a < m; ++a) {
            const double va = w * vals[a];
            const Eigen::Index ra = rows[a];
            for (std::size_t c = 0; c < m; ++c) {
                const Eigen::Index rc = rows[c];
                if (rc <= ra) {
                    N(ra, rc) += va * vals[c];
                }
            }
        }
    }
}

LpResult solve_lp(const LinearProgram &lp, const LpOptions &opts) {
    lp.validate();
    return solve_lp(SparseConstraint(lp.K), lp.b, lp.cost, lp.lower, lp.upper, opts);
}

LpResult solve_lp(const ConstraintMatrix &K, const VectorXd &b_in, const VectorXd &cost,
                  const VectorXd &lower, const VectorXd &upper, const LpOptions &opts) {
    const Eigen::Index m = K.rows();
    const Eigen::Index n = K.cols();
    if (b_in.size() != m || cost.size() != n || lower.size() != n || upper.size() != n) {
        throw DomainError("linear program: inconsistent dimensions");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]) || lower[j] > upper[j]) {
            throw DomainError("linear program: bounds must be finite with lower <= upper");
        }
    }

    // shift to 0 <= x <= U
    const VectorXd U = upper - lower;
    const VectorXd b = b_in - K.multiply(lower);
    const VectorXd &c = cost;
    const double c_shift = c.dot(lower);

    // fixed variables carry no freedom; a tiny width keeps the algebra uniform
    VectorXd Ueff = U.cwiseMax(1e-12);

    VectorXd x = 0.5 * Ueff;
    VectorXd s = Ueff - x;
    VectorXd y = VectorXd::Zero(m);
    VectorXd z(n), w(n);
    const double c_scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < n; ++j) {
        z[j] = std::max(c[j], 0.0) + c_scale;
        w[j] = std::max(-c[j], 0.0) + c_scale;
    }

    const double b_norm = 1.0 + b.norm();
    const double u_norm = 1.0 + Ueff.norm();
    const double c_norm = 1.0 + c.norm();

    MatrixXd N(m, m);
    Eigen::LLT<MatrixXd> llt;
    LpResult res;
    double delta = 0.0;

    for (int it = 0; it < opts.max_iterations; ++it) {
        const VectorXd r_b = b - K.multiply(x);
        const VectorXd r_u = Ueff - x - s;
        const VectorXd r_c = c - K.multiply_transpose(y) - z + w;
        const double pobj = c.dot(x);
        const double dobj = b.dot(y) - Ueff.dot(w);
        const double mu = (x.dot(z) + s.dot(w)) / (2.0 * n);

        res.primal_residual = std::max(r_b.norm() / (b_norm + x.norm()), r_u.norm() / u_norm);
        res.dual_residual = r_c.norm() / c_norm;
        res.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj));
        res.dual_objective = dobj + c_shift;
        res.iterations = it;
        if (opts.verbose) {
            std::fprintf(stderr, "ipm %3d  pobj %+.10e  dobj %+.10e  p %.2e d %.2e gap %.2e mu %.2e\n",
                         it, pobj + c_shift, dobj + c_shift, res.primal_residual,
                         res.dual_residual, res.gap, mu);
        }
        if (res.primal_residual < opts.tolerance && res.dual_residual < opts.tolerance &&
            res.gap < opts.tolerance) {
            res.status = LpStatus::optimal;
            break;
        }
        // complementarity has collapsed but the equalities cannot be met
        if (mu < opts.tolerance * opts.tolerance * c_scale &&
            res.primal_residual > std::sqrt(opts.tolerance)) {
            res.status = LpStatus::infeasible;
            break;
        }
        // a dual ray shows up as an unbounded dual objective
        if (dobj > std::abs(pobj) + 1e8 * (1.0 + c_norm * u_norm) && it > 5) {
            res.status = LpStatus::infeasible;
            break;
        }

        const VectorXd xinv = x.cwiseInverse();
        const VectorXd sinv = s.cwiseInverse();
        const VectorXd D = (xinv.cwiseProduct(z) + sinv.cwiseProduct(w)).cwiseInverse();

        // factor K D K', regularising only when Cholesky breaks down
        bool factored = false;
        delta = 0.0;
        for (int attempt = 0; attempt < 12 && !factored; ++attempt) {
            K.normal_matrix(D, N);
            N.diagonal().array() += delta;
            llt.compute(N);
            if (llt.info() == Eigen::Success) {
                factored = true;
            } else {
                const double scale = std::max(1e-300, N.diagonal().cwiseAbs().maxCoeff());
                delta = delta == 0.0 ? 1e-15 * scale : delta * 10.0;
            }
        }
        if (!factored) {
            res.status = LpStatus::numerical_failure;
            break;
        }

        auto solve_dir = [&](const VectorXd &r_xz, const VectorXd &r_sw, VectorXd &dx,
                             VectorXd &dy, VectorXd &dz, VectorXd &ds, VectorXd &dw) {
            const VectorXd rhat = r_c - xinv.cwiseProduct(r_xz) + sinv.cwiseProduct(r_sw) -
                                  sinv.cwiseProduct(w).cwiseProduct(r_u);
            const VectorXd rhs = r_b + K.multiply(D.cwiseProduct(rhat));
            dy = llt.solve(rhs);
            // iterative refinement against the unregularised operator
            for (int pass = 0; pass < opts.refinement_steps; ++pass) {
                const VectorXd r = rhs - K.multiply(D.cwiseProduct(K.multiply_transpose(dy)));
                if (r.norm() <= 1e-14 * (1.0 + rhs.norm())) {
                    break;
                }
                dy += llt.solve(r);
            }
            dx = D.cwiseProduct(K.multiply_transpose(dy) - rhat);
            dz = xinv.cwiseProduct(r_xz - z.cwiseProduct(dx));
            ds = r_u - dx;
            dw = sinv.cwiseProduct(r_sw - w.cwiseProduct(ds));
        };

        VectorXd dx, dy, dz, ds, dw;
        // predictor
        solve_dir(-x.cwiseProduct(z), -s.cwiseProduct(w), dx, dy, dz, ds, dw);
        const double ap = std::min(max_step(x, dx), max_step(s, ds));
        const double ad = std::min(max_step(z, dz), max_step(w, dw));
        const double mu_aff = ((x + ap * dx).dot(z + ad * dz) + (s + ap * ds).dot(w + ad * dw)) /
                              (2.0 * n);
        const double sigma = std::pow(mu_aff / mu, 3.0);

        // corrector
        const VectorXd r_xz = VectorXd::Constant(n, sigma * mu) - x.cwiseProduct(z) -
                              dx.cwiseProduct(dz);
        const VectorXd r_sw = VectorXd::Constant(n, sigma * mu) - s.cwiseProduct(w) -
                              ds.cwiseProduct(dw);
        solve_dir(r_xz, r_sw, dx, dy, dz, ds, dw);
        const double eta = std::clamp(1.0 - 10.0 * mu / c_scale, 0.9, 0.9995);
        const double step_p = std::min(1.0, eta * std::min(max_step(x, dx), max_step(s, ds)));
        const double step_d = std::min(1.0, eta * std::min(max_step(z, dz), max_step(w, dw)));

        x += step_p * dx;
        s += step_p * ds;
        y += step_d * dy;
        z += step_d * dz;
        w += step_d * dw;
        // keep strictly interior
        constexpr double floor_v = 1e-300;
        x = x.cwiseMax(floor_v);
        s = s.cwiseMax(floor_v);
        z = z.cwiseMax(floor_v);
        w = w.cwiseMax(floor_v);
        if (!x.allFinite() || !y.allFinite()) {
            res.status = LpStatus::numerical_failure;
            break;
        }
        res.status = LpStatus::iteration_limit;
        res.iterations = it + 1;
    }

    res.x = lower + x;
    res.y = y;
    res.objective = c.dot(x) + c_shift;
    return res;
}

} // namespace tct
