#pragma once

#include "tct/fbp.hpp"
#include "tct/image.hpp"
#include "tct/sinogram.hpp"

namespace tct {

struct PfcOptions {
    FbpOptions fbp{};
};

/**
 * Projection fidelity step: reprojects @p candidate along the rays of
 * @p measured, reconstructs the residual on the measured samples (zero
 * elsewhere) by FBP and adds back its positive part.
 */
SliceImage pfc_apply(const SliceImage &candidate, const Sinogram &measured,
                     const PfcOptions &opts = {});

/// ||P - A x|| / ||P|| over the measured samples.
double residual_report(const SliceImage &candidate, const Sinogram &measured);

} // namespace tct
