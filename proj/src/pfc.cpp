#include "tct/pfc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tct/error.hpp"
#include "tct/projector.hpp"

namespace tct {

namespace {

void check_fit(const SliceImage &candidate, const Sinogram &measured) {
    measured.validate();
    if (candidate.side < 1 || candidate.values.size() != candidate.size()) {
        throw DomainError("pfc: empty candidate");
    }
    const ScanGeometry &g = measured.geom;
    const double fov = g.sod * std::sin(g.fan_half_angle());
    if (0.5 * candidate.extent() > fov * (1.0 + 1e-9)) {
        std::ostringstream why;
        why << "pfc: slice half-width " << 0.5 * candidate.extent()
            << " mm exceeds the scan field of view " << fov << " mm";
        throw GeometryError(why.str());
    }
}

} // namespace

SliceImage pfc_apply(const SliceImage &candidate, const Sinogram &measured,
                     const PfcOptions &opts) {
    check_fit(candidate, measured);
    const Sinogram reproj = forward_project(candidate, measured.geom, measured.view_angles);
    Sinogram residual = measured;
    for (std::size_t i = 0; i < residual.size(); ++i) {
        residual.values[i] = measured.measured[i] ? measured.values[i] - reproj.values[i] : 0.0;
    }
    residual.zero_unmeasured();
    const SliceImage correction =
        fbp_reconstruct(residual, candidate.side, candidate.pixel_size, opts.fbp);
    SliceImage out = candidate;
    for (std::size_t p = 0; p < out.size(); ++p) {
        out.values[p] += std::max(correction.values[p], 0.0);
    }
    return out;
}

double residual_report(const SliceImage &candidate, const Sinogram &measured) {
    check_fit(candidate, measured);
    const Sinogram reproj = forward_project(candidate, measured.geom, measured.view_angles);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < measured.size(); ++i) {
        if (measured.measured[i]) {
            const double r = measured.values[i] - reproj.values[i];
            num += r * r;
            den += measured.values[i] * measured.values[i];
        }
    }
    if (!(den > 0.0)) {
        throw DomainError("pfc: measured data has zero norm");
    }
    return std::sqrt(num / den);
}

} // namespace tct
