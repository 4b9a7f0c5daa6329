#pragma once

#include "tct/image.hpp"
#include "tct/projector.hpp"
#include "tct/sinogram.hpp"

namespace tct {

enum class RampWindow { ram_lak, hann };

struct FbpOptions {
    RampWindow window = RampWindow::hann;
    /// Fraction of Nyquist where the apodisation reaches zero.
    double cutoff = 1.0;
};

/**
 * Flat-detector fan-beam filtered backprojection over a full circular scan:
 * cosine pre-weighting, apodised ramp filtering on a zero-padded detector row,
 * and distance-weighted pixel-driven backprojection. Samples outside the
 * measured mask are used as they are.
 */
SliceImage fbp_reconstruct(const Sinogram &sino, int side, double pixel_size,
                           const FbpOptions &opts = {});

/// The apodised ramp filter response on a padded grid of @p padded samples
/// spaced @p spacing apart (exposed for tests).
std::vector<double> ramp_filter_response(int padded, double spacing,
                                         const FbpOptions &opts);

} // namespace tct
