#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace tct {

using Vec2 = Eigen::Vector2d;

inline constexpr double pi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / pi; }

/// Wraps an angle into [0, 2pi).
double wrap_two_pi(double angle);

/**
 * Circular fan-beam acquisition with a flat, equispaced detector.
 *
 * The source sits at sod * (cos b, sin b). Bin j sits on the detector line at
 * signed offset u_j from the central ray, and the fan angle of its ray is
 * atan(u_j / sdd), positive toward increasing bin index. Lengths are in mm.
 */
struct ScanGeometry {
    double sod = 1500.0;
    double sdd = 1650.0;
    int n_bins = 768;
    double bin_pitch = 0.139;
    int n_views_full = 1440;
    double angle_step = 2.0 * pi / 1440.0;
    double detector_offset = 0.0; ///< in bins

    /// Throws GeometryError when an invariant is violated.
    void validate() const;

    double magnification() const { return sdd / sod; }
    double bin_u(int bin) const;
    double fan_angle(int bin) const;
    /// Signed distance of the ray of @p bin from the isocenter.
    double ray_offset(int bin) const;
    /// Largest |fan angle| over the detector.
    double fan_half_angle() const;

    Vec2 source(double beta) const;
    Vec2 detector_point(double beta, int bin) const;

    /// The full angular grid k * angle_step, k < n_views_full.
    std::vector<double> full_view_angles() const;

    /// Fractional bin whose ray has signed offset @p s from the isocenter.
    double bin_for_offset(double s) const;

    /**
     * Table I acquisition (SOD 1500 mm, 150 mm isocenter to detector,
     * 0.139 mm pitch, 0.25 degree step) with the detector cropped to
     * @p n_bins units.
     */
    static ScanGeometry table_one(int n_bins = 768);

    /**
     * Table I distances rescaled for a slice of @p side pixels: pixels and bins
     * grow by 512 / side so the physical object keeps its size, and the view
     * count shrinks by the same factor.
     */
    static ScanGeometry desk_scale(int side);

    /// Physical pixel size of a @p side slice matching desk_scale(side).
    static double desk_pixel_size(int side);
};

struct AnnulusSpec {
    double r_inner = 0.0;
    double r_outer = 0.0;
    Vec2 center = Vec2::Zero();

    void validate() const;
    AnnulusSpec scaled(double factor) const;
};

struct RayIndex {
    int view = 0;
    int bin = 0;

    bool in_range(int n_views, int n_bins) const {
        return view >= 0 && view < n_views && bin >= 0 && bin < n_bins;
    }
};

/// Angular range seen by a point at radius @p L outside a core of radius @p r.
double angle_coverage(double r, double L);

/// Tilt depth d producing angular range @p theta at the inner circle radius @p r.
double tilt_depth_for_angle(double r, double theta);

/// Detector extension (mm, in the detector plane) for tilt depth @p d.
double detector_extension(const ScanGeometry &geom, double r, double d);

/// Inverse of detector_extension in d for a fixed radius.
double tilt_depth_for_extension(const ScanGeometry &geom, double r,
                                double extension);

/// Row-major views x bins table of chord lengths.
struct LengthTable {
    int n_views = 0;
    int n_bins = 0;
    std::vector<double> values;

    double operator()(int view, int bin) const {
        return values[static_cast<std::size_t>(view) * n_bins + bin];
    }
};

/// Chord length of the ray (beta, bin) inside the annulus material.
double ray_annulus_length(const ScanGeometry &geom, const AnnulusSpec &ann,
                          double beta, int bin);

LengthTable ray_annulus_lengths(const ScanGeometry &geom,
                                const AnnulusSpec &ann,
                                std::span<const double> angles);

LengthTable ray_annulus_lengths(const ScanGeometry &geom,
                                const AnnulusSpec &ann);

/// The opposite-side sample of the same line: (-gamma, beta + pi - 2 gamma).
std::pair<double, double> conjugate_ray(const ScanGeometry &geom, double gamma,
                                        double beta);

} // namespace tct
