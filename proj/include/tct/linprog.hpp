#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace tct {

/**
 * Equality-constraint matrix K as seen by the interior point method: products
 * with K and K', and the normal matrix K diag(d) K'.
 */
class ConstraintMatrix {
  public:
    virtual ~ConstraintMatrix() = default;
    virtual Eigen::Index rows() const = 0;
    virtual Eigen::Index cols() const = 0;
    virtual Eigen::VectorXd multiply(const Eigen::VectorXd &x) const = 0;
    virtual Eigen::VectorXd multiply_transpose(const Eigen::VectorXd &y) const = 0;
    /// Writes the lower triangle of K diag(d) K' into @p N (rows x rows).
    virtual void normal_matrix(const Eigen::VectorXd &d, Eigen::MatrixXd &N) const = 0;
};

class SparseConstraint final : public ConstraintMatrix {
  public:
    explicit SparseConstraint(const Eigen::SparseMatrix<double> &K) : K_(K) {}
    Eigen::Index rows() const override { return K_.rows(); }
    Eigen::Index cols() const override { return K_.cols(); }
    Eigen::VectorXd multiply(const Eigen::VectorXd &x) const override { return K_ * x; }
    Eigen::VectorXd multiply_transpose(const Eigen::VectorXd &y) const override {
        return K_.transpose() * y;
    }
    void normal_matrix(const Eigen::VectorXd &d, Eigen::MatrixXd &N) const override;

  private:
    const Eigen::SparseMatrix<double> &K_;
};

/**
 * min cost'x  s.t.  K x = b,  lower <= x <= upper.
 *
 * Every bound must be finite. K is stored column-major so the solver can walk
 * columns when it forms K D K'.
 */
struct LinearProgram {
    Eigen::SparseMatrix<double> K;
    Eigen::VectorXd b;
    Eigen::VectorXd cost;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    void validate() const;
};

enum class LpStatus { optimal, infeasible, iteration_limit, numerical_failure };

const char *to_string(LpStatus s);

struct LpOptions {
    int max_iterations = 120;
    double tolerance = 1e-8;
    int refinement_steps = 3;
    bool verbose = false;
};

struct LpResult {
    LpStatus status = LpStatus::numerical_failure;
    Eigen::VectorXd x;
    Eigen::VectorXd y; ///< equality multipliers
    double objective = 0.0;
    /// Dual bound: objective >= dual_objective at every dual-feasible iterate.
    double dual_objective = 0.0;
    int iterations = 0;
    double primal_residual = 0.0; ///< relative
    double dual_residual = 0.0;   ///< relative
    double gap = 0.0;             ///< relative duality gap
};

/// Mehrotra predictor-corrector interior point method on the bounded form,
/// solving normal equations with a dense Cholesky factorisation.
LpResult solve_lp(const LinearProgram &lp, const LpOptions &opts = {});

LpResult solve_lp(const ConstraintMatrix &K, const Eigen::VectorXd &b,
                  const Eigen::VectorXd &cost, const Eigen::VectorXd &lower,
                  const Eigen::VectorXd &upper, const LpOptions &opts = {});

} // namespace tct
