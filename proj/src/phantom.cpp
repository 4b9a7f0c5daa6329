#include "tct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tct/error.hpp"

namespace tct {

void PhantomRecipe::validate() const {
    if (side < 2 || !(pixel_size > 0.0)) {
        throw ConfigError("phantom: side >= 2 and positive pixel size required");
    }
    if (!(r_inner_px > 0.0 && r_inner_px < r_outer_px)) {
        throw ConfigError("phantom: need 0 < r_inner < r_outer");
    }
    if (2.0 * r_outer_px > side) {
        throw ConfigError("phantom: annulus does not fit in the slice");
    }
    if (n_cracks < 0 || crack_min < 1 || crack_max < crack_min) {
        throw ConfigError("phantom: invalid crack count or size range");
    }
    if (wall_density < 0.0 || crack_density < 0.0) {
        throw ConfigError("phantom: densities must be non-negative");
    }
}

AnnulusSpec PhantomRecipe::annulus() const {
    return {r_inner_px * pixel_size, r_outer_px * pixel_size, Vec2::Zero()};
}

namespace {

double centre_distance(int side, int row, int col) {
    const double c = 0.5 * (side - 1);
    return std::hypot(col - c, row - c);
}

// A crack may not sever the ring: it must not reach both the hole and the
// outside at once.
bool placement_ok(const PhantomRecipe &recipe, const CrackRect &rect) {
    if (rect.row0 < 0 || rect.col0 < 0 || rect.row0 + rect.height > recipe.side ||
        rect.col0 + rect.width > recipe.side) {
        return false;
    }
    bool touches_hole = false;
    bool touches_outside = false;
    bool touches_wall = false;
    for (int r = rect.row0; r < rect.row0 + rect.height; ++r) {
        for (int c = rect.col0; c < rect.col0 + rect.width; ++c) {
            const double d = centre_distance(recipe.side, r, c);
            touches_hole |= d < recipe.r_inner_px;
            touches_outside |= d > recipe.r_outer_px;
            touches_wall |= d >= recipe.r_inner_px && d <= recipe.r_outer_px;
        }
    }
    return touches_wall && !(touches_hole && touches_outside);
}

} // namespace

Phantom generate_annulus_with_cracks(const PhantomRecipe &recipe) {
    recipe.validate();
    Phantom out;
    out.image = SliceImage(recipe.side, recipe.pixel_size, 0.0);
    out.image.roi_mask =
        annulus_roi(recipe.side, recipe.pixel_size, recipe.annulus());
    for (std::size_t i = 0; i < out.image.values.size(); ++i) {
        if (out.image.roi_mask[i]) {
            out.image.values[i] = recipe.wall_density;
        }
    }

    std::mt19937_64 rng(recipe.seed);
    std::uniform_int_distribution<int> size_dist(recipe.crack_min,
                                                 recipe.crack_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double c = 0.5 * (recipe.side - 1);
    const double r2_lo = recipe.r_inner_px * recipe.r_inner_px;
    const double r2_hi = recipe.r_outer_px * recipe.r_outer_px;

    for (int k = 0; k < recipe.n_cracks; ++k) {
        CrackRect rect;
        rect.height = size_dist(rng);
        rect.width = size_dist(rng);
        bool placed = false;
        for (int attempt = 0; attempt < recipe.max_placement_retries; ++attempt) {
            const double radius = std::sqrt(r2_lo + (r2_hi - r2_lo) * unit(rng));
            const double phi = 2.0 * pi * unit(rng);
            const double cx = c + radius * std::cos(phi);
            const double cy = c + radius * std::sin(phi);
            rect.col0 = static_cast<int>(std::lround(cx - 0.5 * (rect.width - 1)));
            rect.row0 = static_cast<int>(std::lround(cy - 0.5 * (rect.height - 1)));
            if (placement_ok(recipe, rect)) {
                placed = true;
                break;
            }
        }
        if (!placed) {
            std::ostringstream why;
            why << "phantom: could not place a " << rect.height << "x"
                << rect.width << " crack after " << recipe.max_placement_retries
                << " attempts";
            throw NumericalError(why.str());
        }
        for (int r = rect.row0; r < rect.row0 + rect.height; ++r) {
            for (int col = rect.col0; col < rect.col0 + rect.width; ++col) {
                const std::size_t idx = static_cast<std::size_t>(r) * recipe.side + col;
                if (out.image.roi_mask[idx]) {
                    out.image.values[idx] = recipe.crack_density;
                }
            }
        }
        out.cracks.push_back(rect);
    }
    return out;
}

SliceImage generate_annulus(const PhantomRecipe &recipe) {
    return generate_annulus_with_cracks(recipe).image;
}

namespace {

// Overlap weights of target cell t with source cells along one axis.
struct Span1d {
    int first = 0;
    std::vector<double> weights;
};

std::vector<Span1d> overlap_spans(int source, int target) {
    std::vector<Span1d> spans(static_cast<std::size_t>(target));
    const double ratio = static_cast<double>(source) / target;
    for (int t = 0; t < target; ++t) {
        const double lo = t * ratio;
        const double hi = (t + 1) * ratio;
        const int first = static_cast<int>(std::floor(lo));
        const int last = std::min(source - 1, static_cast<int>(std::ceil(hi)) - 1);
        spans[t].first = first;
        for (int s = first; s <= last; ++s) {
            const double w = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
            spans[t].weights.push_back(std::max(0.0, w) / ratio);
        }
    }
    return spans;
}

} // namespace

SliceImage downscale(const SliceImage &img, int target_side,
                     const std::optional<AnnulusSpec> &ann) {
    if (target_side <= 0) {
        throw DomainError("downscale: target side must be positive");
    }
    if (target_side == img.side) {
        SliceImage copy = img;
        if (ann) {
            copy.roi_mask = annulus_roi(copy.side, copy.pixel_size, *ann);
        }
        return copy;
    }
    const auto spans = overlap_spans(img.side, target_side);
    SliceImage out(target_side,
                   img.pixel_size * img.side / static_cast<double>(target_side));
    std::vector<double> roi_frac;
    if (img.has_roi() && !ann) {
        roi_frac.assign(out.values.size(), 0.0);
    }
    for (int r = 0; r < target_side; ++r) {
        const Span1d &sr = spans[r];
        for (int c = 0; c < target_side; ++c) {
            const Span1d &sc = spans[c];
            double acc = 0.0;
            double roi = 0.0;
            for (std::size_t i = 0; i < sr.weights.size(); ++i) {
                const int row = sr.first + static_cast<int>(i);
                for (std::size_t j = 0; j < sc.weights.size(); ++j) {
                    const int col = sc.first + static_cast<int>(j);
                    const double w = sr.weights[i] * sc.weights[j];
                    acc += w * img.at(row, col);
                    if (!roi_frac.empty()) {
                        roi += w * img.roi_mask[static_cast<std::size_t>(row) * img.side + col];
                    }
                }
            }
            out.at(r, c) = acc;
            if (!roi_frac.empty()) {
                roi_frac[static_cast<std::size_t>(r) * target_side + c] = roi;
            }
        }
    }
    if (ann) {
        out.roi_mask = annulus_roi(out.side, out.pixel_size, *ann);
    } else if (!roi_frac.empty()) {
        out.roi_mask.resize(roi_frac.size());
        for (std::size_t i = 0; i < roi_frac.size(); ++i) {
            out.roi_mask[i] = roi_frac[i] >= 0.5 ? 1 : 0;
        }
    }
    return out;
}

} // namespace tct
