#include "doctest.h"

#include <cmath>
#include <numeric>

#include "../oracles/quadrature.hpp"
#include "helpers.hpp"
#include "tct/error.hpp"
#include "tct/phantom.hpp"
#include "tct/projector.hpp"

using namespace tct;

TEST_SUITE("projector") {

TEST_CASE("zero image projects to zero") {
    const ScanGeometry g = ScanGeometry::desk_scale(32);
    const Sinogram s = forward_project(SliceImage(32, ScanGeometry::desk_pixel_size(32), 0.0), g);
    for (double v : s.values) {
        CHECK(v == 0.0);
    }
    CHECK(s.measured_count() == s.size());
}

TEST_CASE("line integrals match brute-force quadrature of the pixel image") {
    const int side = 32;
    const double px = ScanGeometry::desk_pixel_size(side);
    const ScanGeometry g = ScanGeometry::desk_scale(side);
    const SliceImage x = testing::random_image(side, px, 21);
    const std::vector<double> angles{0.0, 0.37, 1.9, 4.4};
    const Sinogram s = forward_project(x, g, angles);
    auto f = [&](double a, double b) { return oracle::pixel_value(x.values.data(), side, px, a, b); };
    const double reach = side * px; // beyond the grid's circumcircle
    for (int v = 0; v < s.n_views; ++v) {
        for (int j = 0; j < s.n_bins; j += 3) {
            // sample only the stretch of the ray near the grid
            const Vec2 a = g.source(angles[v]);
            const Vec2 d = (g.detector_point(angles[v], j) - a).normalized();
            const double t_mid = -a.dot(d);
            const double q = oracle::segment_integral(f, a + (t_mid - reach) * d,
                                                      a + (t_mid + reach) * d, 2000000);
            CHECK(s.at(v, j) == doctest::Approx(q).epsilon(1e-4).scale(px));
        }
    }
}

TEST_CASE("uniform disk reads the analytic chord") {
    // Views within about 17 degrees of a pixel axis see the staircase edge of
    // the digitised disk (up to 1.6% near s = 0.9R, with any supersampling);
    // the check runs on oblique views, where the disk edge is well resolved.
    const int side = 256;
    const double px = ScanGeometry::desk_pixel_size(side);
    const double R = 100.0 * px;
    const double mu = 0.02;
    const SliceImage disk = testing::disk_image(side, px, R, mu);
    const ScanGeometry g = ScanGeometry::desk_scale(side);
    const std::vector<double> angles{deg_to_rad(25.0), deg_to_rad(35.0), deg_to_rad(45.0),
                                     deg_to_rad(130.0), deg_to_rad(220.0), deg_to_rad(310.0)};
    const Sinogram s = forward_project(disk, g, angles);
    int checked = 0;
    for (int v = 0; v < s.n_views; ++v) {
        for (int j = 0; j < s.n_bins; ++j) {
            const double off = std::abs(g.ray_offset(j));
            if (off < 0.9 * R) {
                const double chord = mu * 2.0 * std::sqrt(R * R - off * off);
                CHECK(s.at(v, j) == doctest::Approx(chord).epsilon(0.005));
                ++checked;
            }
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("annulus central ray reads twice the wall thickness") {
    PhantomRecipe r;
    r.n_cracks = 0;
    r.side = 512;
    const SliceImage img = generate_annulus(r);
    ScanGeometry g = ScanGeometry::table_one(769);
    const std::vector<double> angles{0.0, 0.9};
    const Sinogram s = forward_project(img, g, angles);
    const double expect = 2.0 * (235.0 - 115.0) * 0.139;
    CHECK(s.at(0, 384) == doctest::Approx(expect).epsilon(0.005));
    CHECK(s.at(1, 384) == doctest::Approx(expect).epsilon(0.005));
}

TEST_CASE("projection is linear") {
    const int side = 32;
    const double px = ScanGeometry::desk_pixel_size(side);
    const ScanGeometry g = ScanGeometry::desk_scale(side);
    const SliceImage x = testing::random_image(side, px, 1);
    const SliceImage y = testing::random_image(side, px, 2);
    SliceImage combo(side, px);
    for (std::size_t i = 0; i < combo.size(); ++i) {
        combo.values[i] = 2.5 * x.values[i] - 0.75 * y.values[i];
    }
    const Sinogram px_ = forward_project(x, g);
    const Sinogram py = forward_project(y, g);
    const Sinogram pc = forward_project(combo, g);
    for (std::size_t i = 0; i < pc.size(); ++i) {
        CHECK(std::abs(pc.values[i] - (2.5 * px_.values[i] - 0.75 * py.values[i])) < 1e-9);
    }
}

TEST_CASE("backprojection is the adjoint") {
    const int side = 48;
    const double px = ScanGeometry::desk_pixel_size(side);
    const ScanGeometry g = ScanGeometry::desk_scale(side);
    for (unsigned seed = 0; seed < 3; ++seed) {
        const SliceImage x = testing::random_image(side, px, 10 + seed, -1.0, 1.0);
        Sinogram y = forward_project(SliceImage(side, px, 0.0), g);
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (double &v : y.values) {
            v = u(rng);
        }
        const Sinogram Px = forward_project(x, g);
        const SliceImage Pty = backproject(y, side, px);
        const double lhs = std::inner_product(Px.values.begin(), Px.values.end(), y.values.begin(), 0.0);
        const double rhs = std::inner_product(x.values.begin(), x.values.end(), Pty.values.begin(), 0.0);
        CHECK(std::abs(lhs - rhs) <= 1e-3 * std::max(std::abs(lhs), std::abs(rhs)));
    }
}

TEST_CASE("explicit matrix equals the projector") {
    const int side = 24;
    const double px = ScanGeometry::desk_pixel_size(side);
    const ScanGeometry g = ScanGeometry::desk_scale(side);
    const SliceImage x = testing::random_image(side, px, 5);
    const std::vector<double> angles{0.1, 1.4, 3.3};
    const Sinogram s = forward_project(x, g, angles);
    const auto A = projection_matrix(g, angles, side, px);
    const Eigen::VectorXd b = A * Eigen::Map<const Eigen::VectorXd>(x.values.data(), x.values.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(std::abs(b[static_cast<Eigen::Index>(i)] - s.values[i]) < 1e-9);
    }
}

TEST_CASE("rotating the object shifts the views") {
    PhantomRecipe r;
    r.seed = 3;
    const SliceImage img = downscale(generate_annulus_with_cracks(r).image, 64, r.annulus());
    SliceImage rot(64, img.pixel_size);
    // 90 degrees counterclockwise on the centred grid: (x, y) -> (-y, x)
    for (int row = 0; row < 64; ++row) {
        for (int col = 0; col < 64; ++col) {
            rot.at(col, 63 - row) = img.at(row, col);
        }
    }
    const ScanGeometry g = ScanGeometry::desk_scale(64);
    const Sinogram a = forward_project(img, g);
    const Sinogram b = forward_project(rot, g);
    const int shift = g.n_views_full / 4;
    double num = 0.0;
    double den = 0.0;
    for (int v = 0; v < g.n_views_full; ++v) {
        for (int j = 0; j < g.n_bins; ++j) {
            const double d = b.at((v + shift) % g.n_views_full, j) - a.at(v, j);
            num += d * d;
            den += a.at(v, j) * a.at(v, j);
        }
    }
    CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("tangential band geometry") {
    const ScanGeometry g = ScanGeometry::table_one();
    const AnnulusSpec ann{115.0 * 0.139, 235.0 * 0.139, Vec2::Zero()};
    const BinBand b0 = tangential_band(g, ann, 0.0);
    // innermost measured ray touches the inner circle
    CHECK(g.ray_offset(b0.first) >= ann.r_inner - 1e-9);
    CHECK(g.ray_offset(b0.first - 1) < ann.r_inner);

    // width from the closed-form tangent positions on the detector
    TangentialMaskOptions opts;
    auto tangent_u = [&](double r) { return r * g.sdd / std::sqrt(g.sod * g.sod - r * r); };
    const double expect = (tangent_u(ann.r_outer) - tangent_u(ann.r_inner)) / g.bin_pitch +
                          opts.margin_bins + 1.0;
    // an inclusive run of bins over a span of L pitches holds between L - 1 and L + 1
    CHECK(b0.width() <= expect + 1e-9);
    CHECK(b0.width() > expect - 2.0);

    int prev_first = b0.first;
    for (double dp : {0.1, 0.3, 0.6, 1.2}) {
        const BinBand b = tangential_band(g, ann, dp);
        CHECK(b.first < prev_first);
        CHECK(b.last == b0.last);
        CHECK(b.width() <= expect + dp / g.bin_pitch + 1e-9);
        CHECK(b.width() > expect + dp / g.bin_pitch - 2.0);
        prev_first = b.first;
    }
    const auto mask = tangential_mask(g, ann, 0.3, 4);
    CHECK(mask.size() == static_cast<std::size_t>(4 * g.n_bins));
    for (int v = 0; v < 4; ++v) {
        int runs = 0;
        for (int j = 0; j < g.n_bins; ++j) {
            runs += mask[v * g.n_bins + j] && (j == 0 || !mask[v * g.n_bins + j - 1]);
        }
        CHECK(runs == 1);
    }
    CHECK_THROWS_AS(tangential_band(g, ann, -1.0), DomainError);
    // a detector too short to reach the wall
    const ScanGeometry tiny = ScanGeometry::table_one(32);
    CHECK_THROWS_AS(tangential_band(tiny, ann, 0.0), GeometryError);
}

TEST_CASE("both-sided mask mirrors the band") {
    const ScanGeometry g = ScanGeometry::table_one();
    const AnnulusSpec ann{115.0 * 0.139, 235.0 * 0.139, Vec2::Zero()};
    TangentialMaskOptions opts;
    opts.both_sides = true;
    const auto one = tangential_mask(g, ann, 0.0, 1);
    const auto two = tangential_mask(g, ann, 0.0, 1, opts);
    const int n1 = std::accumulate(one.begin(), one.end(), 0);
    const int n2 = std::accumulate(two.begin(), two.end(), 0);
    CHECK(n2 >= 2 * n1 - 2);
    CHECK(n2 <= 2 * n1 + 2);
}

TEST_CASE("apply_mask zeroes the unmeasured samples") {
    const ScanGeometry g = ScanGeometry::desk_scale(32);
    const SliceImage x = testing::random_image(32, ScanGeometry::desk_pixel_size(32), 3);
    Sinogram s = forward_project(x, g);
    std::vector<std::uint8_t> mask(s.size(), 0);
    for (std::size_t i = 0; i < mask.size(); i += 3) {
        mask[i] = 1;
    }
    const Sinogram before = s;
    apply_mask(s, mask);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s.measured[i] == mask[i]);
        CHECK(s.values[i] == (mask[i] ? before.values[i] : 0.0));
    }
    std::vector<std::uint8_t> wrong(3, 1);
    CHECK_THROWS_AS(apply_mask(s, wrong), FormatError);
}

TEST_CASE("poisson noise") {
    const ScanGeometry g = ScanGeometry::desk_scale(32);
    const SliceImage x = testing::random_image(32, ScanGeometry::desk_pixel_size(32), 4, 0.0, 0.05);
    Sinogram s = forward_project(x, g);
    std::vector<std::uint8_t> mask(s.size(), 1);
    mask[0] = 0;
    apply_mask(s, mask);

    SUBCASE("huge photon counts leave the data unchanged") {
        const Sinogram n = apply_poisson_noise(s, {1e12, 7});
        CHECK(testing::max_abs_diff(n.values, s.values) < 1e-4);
    }
    SUBCASE("deterministic in the seed, unmeasured untouched") {
        const Sinogram a = apply_poisson_noise(s, {2e5, 11});
        const Sinogram b = apply_poisson_noise(s, {2e5, 11});
        const Sinogram c = apply_poisson_noise(s, {2e5, 12});
        CHECK(a.values == b.values);
        CHECK(a.values != c.values);
        CHECK(a.values[0] == 0.0);
    }
    SUBCASE("zero line integral: mean zero, variance 1/N0") {
        // delta method: var(-ln(k/N0)) ~ 1/N0 for k ~ Poisson(N0)
        Sinogram zero = s;
        std::fill(zero.values.begin(), zero.values.end(), 0.0);
        const double n0 = 2e5;
        double sum = 0.0;
        double sq = 0.0;
        std::size_t count = 0;
        for (std::uint64_t seed = 0; count < 100000; ++seed) {
            const Sinogram n = apply_poisson_noise(zero, {n0, seed});
            for (std::size_t i = 1; i < n.size() && count < 100000; ++i) {
                sum += n.values[i];
                sq += n.values[i] * n.values[i];
                ++count;
            }
        }
        const double mean = sum / count;
        const double var = sq / count - mean * mean;
        CHECK(std::abs(mean) < 5.0 * std::sqrt(1.0 / n0 / count) + 1e-6);
        CHECK(var == doctest::Approx(1.0 / n0).epsilon(0.1));
    }
    CHECK_THROWS_AS(apply_poisson_noise(s, {0.0, 1}), ConfigError);
}

}
