#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "tct/image.hpp"
#include "tct/sinogram.hpp"

namespace tct {

/// Weights on |horizontal| and |vertical| differences inside one sector.
struct GradientWeights {
    double h = 0.5;
    double v = 0.5;
};

/// Polar sectors around the isocenter, by pixel-centre angle.
enum class Sector { right, top, left, bottom };

Sector sector_of(double x, double y);

struct AtvConfig {
    int n_sart_iters = 100;
    int n_tv_steps = 10;
    /// Fixed TV step (image units). Zero ties the step to the size of the
    /// preceding SART update, scaled by tv_step_ratio.
    double tv_step = 0.0;
    double tv_step_ratio = 0.2;
    double relaxation = 1.0;
    /// Indexed by Sector. Top and bottom favour horizontal smoothing, left and
    /// right vertical, i.e. smoothing runs along the wall.
    std::array<GradientWeights, 4> sector_weights{
        GradientWeights{0.4, 0.6}, GradientWeights{0.6, 0.4},
        GradientWeights{0.4, 0.6}, GradientWeights{0.6, 0.4}};
    /// Swap the two numbers of every pair.
    bool flip_sectors = false;
    bool nonneg = true;
    /// Stop when the relative change of the data residual drops below this.
    double stop_tol = 0.0;
    double epsilon = 1e-6;
    /// Abort once the residual exceeds its running minimum by this factor.
    double divergence_factor = 10.0;

    void validate() const;
    GradientWeights weights(Sector s) const;
};

/**
 * Row-action projector state for SART: the system matrix of the sinogram's
 * rays with the row and column sums needed for normalisation. Rows whose
 * sample is not filled are left out of every update.
 */
class SartOperator {
  public:
    SartOperator(const Sinogram &sino, int side, double pixel_size);

    const Eigen::SparseMatrix<double, Eigen::RowMajor> &matrix() const { return A_; }
    int side() const { return side_; }
    double pixel_size() const { return pixel_size_; }
    /// ||b - A x|| over the rows in use.
    double residual_norm(const SliceImage &x) const;
    /// One relaxed sweep, view by view.
    void sweep(SliceImage &x, double lambda, bool nonneg) const;

  private:
    int side_;
    double pixel_size_;
    int n_views_;
    int n_bins_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> A_;
    Eigen::VectorXd b_;
    std::vector<std::uint8_t> used_;
    std::vector<double> inv_row_;
    std::vector<std::vector<double>> inv_col_; ///< per view
    std::vector<int> order_;
};

/// One SART sweep of @p x against @p sino.
SliceImage sart_step(const SliceImage &x, const Sinogram &sino, double lambda,
                     bool nonneg = false);

/// Smoothed weighted anisotropic TV: sum of w_h sqrt(dh^2 + eps^2) + w_v sqrt(dv^2 + eps^2).
double weighted_tv(const SliceImage &x, const AtvConfig &cfg);

/// Its gradient with respect to the pixel values.
std::vector<double> weighted_tv_gradient(const SliceImage &x, const AtvConfig &cfg);

/**
 * cfg.n_tv_steps normalised gradient steps of length @p step on weighted_tv;
 * a step that would raise the objective is halved until it does not.
 */
SliceImage weighted_atv_descent(const SliceImage &x, const AtvConfig &cfg, double step);

/// Same with cfg.tv_step as the step length.
SliceImage weighted_atv_descent(const SliceImage &x, const AtvConfig &cfg);

struct AtvResult {
    SliceImage image;
    std::vector<double> residual_history; ///< after each outer iteration
    std::vector<double> tv_history;
    int iterations = 0;
};

/**
 * Alternates SART sweeps with weighted ATV descent. Starts from @p x0, or
 * from zero when x0 is empty. Throws NumericalError on divergence.
 */
AtvResult reconstruct_atv(const Sinogram &sino, int side, double pixel_size,
                          const AtvConfig &cfg, const SliceImage &x0 = {});

/// Residual history as one "iteration residual tv" line per iteration.
std::string format_history(const AtvResult &result);

} // namespace tct
