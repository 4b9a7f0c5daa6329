#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "tct/geometry.hpp"
#include "tct/image.hpp"
#include "tct/linprog.hpp"

namespace tct {

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Limited-angle surrogate used to certify a (theta, n_view) sampling.
struct SurrogateOptions {
    bool parallel_beam = false;
    /// Pixel size of the working grid; <= 0 picks the desk-scale size.
    double pixel_size = 0.0;
    /// Detector length, referred to the isocenter, over the image width.
    double detector_span = 1.0;
    /// Memory guard on m * n of the system matrix.
    std::size_t max_entries = std::size_t{1} << 28;
};

/**
 * System matrix of the limited-angle surrogate: n_view views spread evenly
 * over [0, theta] (both ends included), 2 * side bins each, exact ray-pixel
 * intersection lengths. Rows are ordered view-major.
 */
RowSparse build_system_matrix(int side, double theta, int n_view,
                              const ScanGeometry &geom,
                              const SurrogateOptions &opts = {});

/// D with n rows and 2n columns: D' x stacks horizontal then vertical forward
/// differences, zero on the last column and last row respectively.
Eigen::SparseMatrix<double> build_gradient_matrix(int side);

struct LPCertificate {
    bool full_rank = false;
    double t_star = 0.0; ///< +inf when the LP is infeasible
    bool feasible = false;
    LpStatus solver_status = LpStatus::numerical_failure;
    int support_size = 0;  ///< |I|
    int rank_deficiency = 0;
    int iterations = 0;

    bool passes(double t_threshold = 1.0) const {
        return full_rank && feasible && solver_status == LpStatus::optimal &&
               t_star < t_threshold;
    }
};

struct CertificateOptions {
    double support_threshold = 1e-8;
    double rank_tolerance = 1e-9;
    /// Singular values of A below this fraction of the largest count as zero.
    double range_tolerance = 1e-7;
    LpOptions lp{};
    /// Upper bound on 1/t in the homogeneous LP; t below 1/tau_max reads as 0.
    double tau_max = 1e6;
    /// t above this is reported as an infeasible LP.
    double t_infeasible = 1e6;
    /// Skip the LP when the rank condition already fails.
    bool lp_only_if_full_rank = true;
};

/// Orthonormal basis of null(A) and the numerical rank of A.
struct NullBasis {
    Eigen::MatrixXd Z;
    int rank = 0;
};

NullBasis null_basis_of(const RowSparse &A, double tolerance);

/**
 * Exact-recovery certificate for min ||D'x||_1 s.t. Ax = b at x_ref:
 * the rank of (A; D_{I^c}') and the LP
 *   min t  s.t.  A'w = D_I sign(D_I' x_ref) + D_{I^c} v,  |v| <= t,
 * where I is the gradient support of x_ref.
 */
LPCertificate uniqueness_test(const RowSparse &A,
                              const Eigen::SparseMatrix<double> &D,
                              const SliceImage &x_ref,
                              const CertificateOptions &opts = {});

/// Same with a precomputed null basis of A (shared across phantoms).
LPCertificate uniqueness_test(const RowSparse &A, const NullBasis &basis,
                              const Eigen::SparseMatrix<double> &D,
                              const SliceImage &x_ref,
                              const CertificateOptions &opts = {});

/// Rank test on its own: true when (A; D_{I^c}') has full column rank.
bool stacked_full_rank(const RowSparse &A, const std::vector<std::uint8_t> &in_support,
                       int side, double tolerance, int *deficiency = nullptr);

struct SamplingModelParams {
    double T_theta = deg_to_rad(90.0);
    double T_nview = 32.0;
    double T_t = 0.999;
    double alpha = 1.5;
    double beta = 1.5;
    double gamma = 2.0;

    void validate() const;
};

struct SamplingSpec {
    double theta = 0.0; ///< radians
    int n_view = 0;     ///< at the working side
    double t_star = 0.0;
    double r_view = 0.0;
    double d_prime = 0.0;    ///< detector extension in bins of the target geometry
    double d_prime_mm = 0.0; ///< the same in mm on the detector
    int working_side = 0;
    int target_side = 0;
    int n_view_target = 0; ///< n_view scaled to the target side at constant r_view
    double objective = 0.0;
};

double sampling_objective(const SamplingSpec &spec, const SamplingModelParams &params);

/// Reference view count n / N_bin = side / 2 for an n = side^2 image.
inline double sufficient_views(int side) { return 0.5 * side; }

struct CandidateRecord {
    double theta = 0.0;
    int n_view = 0;
    bool evaluated = false;
    bool pruned = false;
    bool passes = false;
    bool frontier = false;
    bool full_rank = false;
    double t_star = 0.0;
    double objective = 0.0;
    double seconds = 0.0;
};

enum class QuantifySearch {
    /// For each theta, from the largest down, the fewest views that pass;
    /// the objective is minimised over these frontier points.
    frontier,
    /// Every grid point is a candidate.
    grid,
};

struct QuantifyOptions {
    std::vector<double> thetas;  ///< radians; empty means 20..90 deg step 2
    std::vector<int> n_views;    ///< empty means 4..32 step 2
    QuantifySearch search = QuantifySearch::frontier;
    /// Grid search only: assume t is non-increasing in theta and n_view, and
    /// skip candidates that cannot beat the incumbent or are dominated by a
    /// failure.
    bool monotone_pruning = true;
    CertificateOptions certificate{};
    SurrogateOptions surrogate{};
    /// Side whose view count and detector extension are reported.
    int target_side = 512;
    /// Geometry and inner radius (mm) used for the detector extension.
    ScanGeometry target_geometry = ScanGeometry::table_one();
    double r_inner_mm = 115.0 * 0.139;
    std::function<void(const CandidateRecord &)> progress;
};

struct QuantifyResult {
    SamplingSpec best;
    std::vector<CandidateRecord> candidates;
    int lp_solves = 0;
};

/**
 * Searches the (theta, n_view) grid for the sampling that minimises the
 * sampling objective among candidates certified on every phantom. Frontier
 * search assumes the fewest passing views never drops as theta shrinks, and
 * stops at the first theta where no view count passes. Throws
 * InfeasibleError when nothing passes.
 */
QuantifyResult quantify_projection(const std::vector<SliceImage> &phantoms,
                                   const ScanGeometry &geom,
                                   const SamplingModelParams &params,
                                   const QuantifyOptions &opts = {});

/// Fills r_view, d_prime and the target-side view count of @p spec.
void finish_spec(SamplingSpec &spec, const QuantifyOptions &opts);

std::string format_spec(const SamplingSpec &spec);

} // namespace tct
