#include "tct/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tct/error.hpp"

namespace tct {

double wrap_two_pi(double angle) {
    double a = std::fmod(angle, 2.0 * pi);
    if (a < 0.0) {
        a += 2.0 * pi;
    }
    if (a >= 2.0 * pi) {
        a = 0.0;
    }
    return a;
}

void ScanGeometry::validate() const {
    std::ostringstream why;
    if (!(sod > 0.0)) {
        why << "sod must be positive (got " << sod << ")";
    } else if (!(sdd > sod)) {
        why << "sdd must exceed sod (got sdd=" << sdd << ", sod=" << sod << ")";
    } else if (n_bins < 1) {
        why << "n_bins must be >= 1";
    } else if (!(bin_pitch > 0.0)) {
        why << "bin_pitch must be positive";
    } else if (n_views_full < 1) {
        why << "n_views_full must be >= 1";
    } else if (std::abs(n_views_full * angle_step - 2.0 * pi) > 1e-9) {
        why << "n_views_full * angle_step must equal 2pi (got "
            << n_views_full * angle_step << ")";
    }
    if (!why.str().empty()) {
        throw GeometryError(why.str());
    }
}

double ScanGeometry::bin_u(int bin) const {
    return (bin - 0.5 * (n_bins - 1) + detector_offset) * bin_pitch;
}

double ScanGeometry::fan_angle(int bin) const {
    return std::atan(bin_u(bin) / sdd);
}

double ScanGeometry::ray_offset(int bin) const {
    return sod * std::sin(fan_angle(bin));
}

double ScanGeometry::fan_half_angle() const {
    return std::max(std::abs(fan_angle(0)), std::abs(fan_angle(n_bins - 1)));
}

Vec2 ScanGeometry::source(double beta) const {
    return {sod * std::cos(beta), sod * std::sin(beta)};
}

Vec2 ScanGeometry::detector_point(double beta, int bin) const {
    const double c = std::cos(beta);
    const double s = std::sin(beta);
    const double u = bin_u(bin);
    const Vec2 centre{(sod - sdd) * c, (sod - sdd) * s};
    return centre + u * Vec2{-s, c};
}

std::vector<double> ScanGeometry::full_view_angles() const {
    std::vector<double> angles(static_cast<std::size_t>(n_views_full));
    for (int k = 0; k < n_views_full; ++k) {
        angles[k] = k * angle_step;
    }
    return angles;
}

double ScanGeometry::bin_for_offset(double s) const {
    const double gamma = std::asin(std::clamp(s / sod, -1.0, 1.0));
    const double u = sdd * std::tan(gamma);
    return u / bin_pitch + 0.5 * (n_bins - 1) - detector_offset;
}

ScanGeometry ScanGeometry::table_one(int n_bins) {
    ScanGeometry g;
    g.sod = 1500.0;
    g.sdd = 1500.0 + 150.0;
    g.n_bins = n_bins;
    g.bin_pitch = 0.139;
    g.n_views_full = 1440;
    g.angle_step = 2.0 * pi / 1440.0;
    return g;
}

ScanGeometry ScanGeometry::desk_scale(int side) {
    if (side < 8) {
        throw ConfigError("desk_scale needs side >= 8");
    }
    ScanGeometry g = table_one();
    const double factor = 512.0 / side;
    g.bin_pitch = 0.139 * factor;
    g.n_bins = std::max(16, static_cast<int>(std::lround(768.0 / factor)));
    g.n_views_full = std::max(8, static_cast<int>(std::lround(1440.0 / factor)));
    g.angle_step = 2.0 * pi / g.n_views_full;
    return g;
}

double ScanGeometry::desk_pixel_size(int side) { return 0.139 * 512.0 / side; }

void AnnulusSpec::validate() const {
    if (!(r_inner > 0.0 && r_inner < r_outer)) {
        std::ostringstream why;
        why << "annulus needs 0 < r_inner < r_outer (got " << r_inner << ", "
            << r_outer << ")";
        throw GeometryError(why.str());
    }
}

AnnulusSpec AnnulusSpec::scaled(double factor) const {
    return {r_inner * factor, r_outer * factor, center * factor};
}

double angle_coverage(double r, double L) {
    if (!(r > 0.0)) {
        throw DomainError("angle_coverage: inner radius must be positive");
    }
    if (L < r) {
        throw DomainError("angle_coverage: point lies inside the unscanned core");
    }
    return 2.0 * std::acos(std::min(1.0, r / L));
}

double tilt_depth_for_angle(double r, double theta) {
    if (!(theta >= 0.0 && theta < pi)) {
        throw DomainError("tilt_depth_for_angle: theta must lie in [0, pi)");
    }
    return r * (1.0 - std::cos(0.5 * theta));
}

namespace {

double tangent_u(const ScanGeometry &geom, double radius) {
    return radius * geom.sdd /
           std::sqrt(geom.sod * geom.sod - radius * radius);
}

} // namespace

double detector_extension(const ScanGeometry &geom, double r, double d) {
    if (!(r < geom.sod)) {
        throw GeometryError("detector_extension: radius reaches the source");
    }
    if (!(d >= 0.0 && d < r)) {
        throw DomainError("detector_extension: need 0 <= d < r");
    }
    return tangent_u(geom, r) - tangent_u(geom, r - d);
}

double tilt_depth_for_extension(const ScanGeometry &geom, double r,
                                double extension) {
    if (!(r < geom.sod)) {
        throw GeometryError("tilt_depth_for_extension: radius reaches the source");
    }
    if (extension < 0.0) {
        throw DomainError("tilt_depth_for_extension: negative extension");
    }
    const double u = tangent_u(geom, r) - extension;
    if (u <= 0.0) {
        throw DomainError("tilt_depth_for_extension: extension passes the centre");
    }
    // invert u = s * sdd / sqrt(sod^2 - s^2)
    const double s = u * geom.sod / std::sqrt(geom.sdd * geom.sdd + u * u);
    return r - s;
}

namespace {

double chord(double radius, double dist) {
    return dist < radius ? 2.0 * std::sqrt(radius * radius - dist * dist) : 0.0;
}

} // namespace

double ray_annulus_length(const ScanGeometry &geom, const AnnulusSpec &ann,
                          double beta, int bin) {
    const Vec2 a = geom.source(beta);
    const Vec2 b = geom.detector_point(beta, bin);
    const Vec2 dir = (b - a).normalized();
    const Vec2 rel = ann.center - a;
    const double dist = std::abs(rel.x() * dir.y() - rel.y() * dir.x());
    return chord(ann.r_outer, dist) - chord(ann.r_inner, dist);
}

LengthTable ray_annulus_lengths(const ScanGeometry &geom,
                                const AnnulusSpec &ann,
                                std::span<const double> angles) {
    geom.validate();
    ann.validate();
    LengthTable table;
    table.n_views = static_cast<int>(angles.size());
    table.n_bins = geom.n_bins;
    table.values.resize(angles.size() * static_cast<std::size_t>(geom.n_bins));
#pragma omp parallel for schedule(static)
    for (int v = 0; v < table.n_views; ++v) {
        for (int j = 0; j < geom.n_bins; ++j) {
            table.values[static_cast<std::size_t>(v) * geom.n_bins + j] =
                ray_annulus_length(geom, ann, angles[v], j);
        }
    }
    return table;
}

LengthTable ray_annulus_lengths(const ScanGeometry &geom,
                                const AnnulusSpec &ann) {
    const auto angles = geom.full_view_angles();
    return ray_annulus_lengths(geom, ann, angles);
}

std::pair<double, double> conjugate_ray(const ScanGeometry & /*geom*/,
                                        double gamma, double beta) {
    return {-gamma, wrap_two_pi(beta + pi - 2.0 * gamma)};
}

} // namespace tct
