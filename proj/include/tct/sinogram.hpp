#pragma once

#include <cstdint>
#include <vector>

#include "tct/geometry.hpp"

namespace tct {

/**
 * Views x bins line integrals with explicit view angles.
 *
 * measured marks samples that were physically collected; estimated marks
 * samples filled in by completion from the mean-attenuation model (directly,
 * or mirrored from such a conjugate); mirrored marks samples copied from the
 * conjugate of measured data. The three flags are mutually exclusive.
 */
struct Sinogram {
    int n_views = 0;
    int n_bins = 0;
    ScanGeometry geom;
    std::vector<double> view_angles;
    std::vector<double> values;
    std::vector<std::uint8_t> measured;
    std::vector<std::uint8_t> estimated;
    std::vector<std::uint8_t> mirrored;

    Sinogram() = default;
    Sinogram(const ScanGeometry &g, std::vector<double> angles);

    std::size_t index(int view, int bin) const {
        return static_cast<std::size_t>(view) * n_bins + bin;
    }
    double &at(int view, int bin) { return values[index(view, bin)]; }
    double at(int view, int bin) const { return values[index(view, bin)]; }
    bool is_measured(int view, int bin) const { return measured[index(view, bin)] != 0; }
    bool is_estimated(int view, int bin) const { return estimated[index(view, bin)] != 0; }
    bool is_filled(std::size_t i) const {
        return measured[i] != 0 || estimated[i] != 0 || mirrored[i] != 0;
    }
    bool complete() const;

    std::size_t size() const { return values.size(); }
    std::size_t measured_count() const;

    /// Zero every sample outside the measured mask and drop completion flags.
    void zero_unmeasured();
    /// Shape and geometry consistency; throws FormatError.
    void validate() const;
};

} // namespace tct
