#pragma once

#include <vector>

#include "tct/geometry.hpp"
#include "tct/sinogram.hpp"

namespace tct {

struct CompletionReport {
    double u_bar = 0.0;
    std::vector<double> per_view_alpha;
    double const_estimate = 0.0;
    int clamped_samples = 0;
    std::vector<int> skipped_views; ///< views without estimated support
    int mirror_fallbacks = 0;       ///< conjugates resolved by nearest sample
};

struct CompletionOptions {
    /// Weight view integrals by cos^3(gamma), the flat-detector fan Jacobian.
    bool fan_jacobian = false;
};

/// Sum of measured samples over the sum of their annulus chord lengths.
double estimate_mean_attenuation(const Sinogram &sino, const LengthTable &lengths);

/**
 * Fills every unfilled sample on the non-negative fan-angle half of the
 * detector (the half-scan band reaching the object's midline) with
 * u_bar * L and flags it estimated. Measured samples pass through.
 */
Sinogram extrapolate_to_half_scan(const Sinogram &sino, const LengthTable &lengths,
                                  double u_bar);

/// Same, with the chord table computed from @p ann.
Sinogram extrapolate_to_half_scan(const Sinogram &sino, const AnnulusSpec &ann,
                                  double u_bar);

/**
 * Fills every remaining sample from its conjugate ray, interpolating
 * bilinearly in (view, bin) over filled samples. The view grid must be a
 * uniform full circle. Conjugates touching an unfilled sample fall back to
 * the nearest filled one; @p fallbacks counts them.
 */
Sinogram mirror_to_full_scan(const Sinogram &sino, int *fallbacks = nullptr);

/// Per-view integrals as used by the consistency step.
std::vector<double> view_integrals(const Sinogram &sino, const CompletionOptions &opts = {});

/**
 * Shifts the estimated samples of each view by alpha_i * L so the view
 * integral equals @p const_target, then clamps them at zero. A NaN target
 * means the median view integral.
 */
Sinogram enforce_consistency(const Sinogram &sino, const LengthTable &lengths,
                             double const_target, CompletionReport &report,
                             const CompletionOptions &opts = {});

/// All three steps in order. A sinogram that is already complete comes back unchanged.
Sinogram complete_sinogram(const Sinogram &sino, const AnnulusSpec &ann,
                           CompletionReport &report, const CompletionOptions &opts = {});

} // namespace tct
