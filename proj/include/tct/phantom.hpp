#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tct/geometry.hpp"
#include "tct/image.hpp"

namespace tct {

struct CrackRect {
    int row0 = 0; ///< top-left pixel
    int col0 = 0;
    int height = 0;
    int width = 0;
};

/// Randomised annulus with rectangular cracks. Radii and crack sizes are in
/// pixels of a slice with @ref side pixels of @ref pixel_size mm.
struct PhantomRecipe {
    int side = 512;
    double pixel_size = 0.139;
    double r_inner_px = 115.0;
    double r_outer_px = 235.0;
    int n_cracks = 3;
    int crack_min = 10;
    int crack_max = 30;
    double wall_density = 1.0;
    double crack_density = 0.0;
    std::uint64_t seed = 0;
    int max_placement_retries = 200;

    void validate() const;
    /// The annulus in mm, centred on the isocenter.
    AnnulusSpec annulus() const;
};

struct Phantom {
    SliceImage image;
    std::vector<CrackRect> cracks;
};

/// Deterministic in the recipe seed.
Phantom generate_annulus_with_cracks(const PhantomRecipe &recipe);

SliceImage generate_annulus(const PhantomRecipe &recipe);

/**
 * Mean-preserving resampling to @p target_side pixels by exact pixel-area
 * overlap (a plain box average when the sides divide). When @p ann is given
 * the ROI mask is rebuilt from it on the new grid, otherwise the old mask is
 * resampled by majority.
 */
SliceImage downscale(const SliceImage &img, int target_side,
                     const std::optional<AnnulusSpec> &ann = std::nullopt);

} // namespace tct
