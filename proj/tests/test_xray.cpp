#include <cmath>
#include <vector>

#include "doctest.h"
#include "geowave/xray.hpp"

using namespace geowave;

namespace {

Manifold unit_disk() { return Manifold(euclidean_metric(), {{0, 0}, 0.8}, {{0, 0}, 1.0}); }

}  // namespace

TEST_CASE("forward transform on chord oracles") {
    Manifold m = unit_disk();
    auto fan = make_fan(m, m.outer(), 32, 16);
    SUBCASE("zero field") {
        auto img = forward(fan, zero_field());
        for (double v : img.values) CHECK(v == 0.0);
        CHECK(boundary_h1_norm(img) == 0.0);
    }
    SUBCASE("constant field gives the chord length") {
        auto img = forward(fan, constant_field(1.0));
        double worst = 0;
        for (int is = 0; is < fan->ns(); ++is)
            for (int ib = 0; ib < fan->nb(); ++ib) {
                double l = 2.0 * std::cos(fan->beta(ib));
                worst = std::max(worst, std::abs(img.at(is, ib) - l) / l);
                CHECK(fan->ray(is, ib).exit == doctest::Approx(l).epsilon(1e-9));
            }
        CHECK(worst < 1e-4);
    }
    SUBCASE("paraboloid gives 4/3 cos^3 beta") {
        auto img = forward(fan, paraboloid_field());
        double worst = 0;
        for (int is = 0; is < fan->ns(); ++is)
            for (int ib = 0; ib < fan->nb(); ++ib) {
                double c = std::cos(fan->beta(ib));
                double ex = 4.0 / 3.0 * c * c * c;
                worst = std::max(worst, std::abs(img.at(is, ib) - ex) / ex);
            }
        CHECK(worst < 1e-4);
        double center = ray_integral(m.metric(), {{-1, 0}, {1, 0}}, paraboloid_field(), m.outer(), 0.004);
        CHECK(center == doctest::Approx(4.0 / 3.0).epsilon(1e-6));
    }
}

TEST_CASE("forward transform is linear and positive") {
    Manifold m(constant_curvature_metric(-1.0, {-0.95, 0.95, -0.95, 0.95}), {{0, 0}, 0.5}, {{0, 0}, 0.6});
    auto fan = make_fan(m, m.outer(), 24, 12);
    Field f = bump_field({0.1, 0.0}, 0.3, 1.0), g = gaussian_field({-0.1, 0.2}, 0.15, 2.0);
    auto a = forward(fan, f), b = forward(fan, g), c = forward(fan, sum(scaled(f, 2.0), scaled(g, -3.0)));
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        CHECK(c.values[k] == doctest::Approx(2 * a.values[k] - 3 * b.values[k]).epsilon(1e-12));
        CHECK(a.values[k] >= 0.0);
        CHECK(b.values[k] >= 0.0);
    }
}

TEST_CASE("serial and parallel forward agree") {
    Manifold m = unit_disk();
    auto fs = make_fan(m, m.outer(), 16, 8, 0.0, Exec::serial);
    auto fp = make_fan(m, m.outer(), 16, 8, 0.0, Exec::parallel);
    Field f = gaussian_field({0.2, 0.1}, 0.3, 1.0);
    auto a = forward(fs, f, Exec::serial), b = forward(fp, f, Exec::parallel);
    for (std::size_t k = 0; k < a.values.size(); ++k) CHECK(a.values[k] == b.values[k]);
}

TEST_CASE("boundary H1 norm") {
    Manifold m = unit_disk();
    SUBCASE("constant field matches 16 pi") {
        // If = 2 cos beta, d_s If = 0, d_beta If = -2 sin beta, mu = cos beta
        auto fan = make_fan(m, m.outer(), 64, 64);
        auto img = forward(fan, constant_field(1.0));
        CHECK(boundary_h1_norm(img) == doctest::Approx(std::sqrt(16.0 * pi)).epsilon(0.01));
        CHECK(boundary_l2_norm(img) == doctest::Approx(std::sqrt(32.0 * pi / 3.0)).epsilon(0.01));
    }
    SUBCASE("homogeneity") {
        auto fan = make_fan(m, m.outer(), 32, 16);
        Field f = bump_field({0.2, -0.1}, 0.4, 1.0);
        double n1 = boundary_h1_norm(forward(fan, f));
        double n2 = boundary_h1_norm(forward(fan, scaled(f, 2.0)));
        CHECK(n2 == doctest::Approx(2 * n1).epsilon(1e-12));
    }
    SUBCASE("coarse grids are refused") {
        auto fan = make_fan(m, m.outer(), 2, 8);
        CHECK_THROWS_AS(boundary_h1_norm(forward(fan, constant_field(1.0))), GridTooCoarse);
    }
}

TEST_CASE("inversion") {
    Manifold m(euclidean_metric(), {{0, 0}, 1.0}, {{0, 0}, 1.25});
    SUBCASE("zero image gives the zero field") {
        auto fan = make_fan(m, m.outer(), 32, 16);
        auto r = invert(forward(fan, zero_field()), {.pixels = 16});
        CHECK(l2_norm(r.field, m) == 0.0);
    }
    SUBCASE("linearity") {
        auto fan = make_fan(m, m.outer(), 32, 16);
        InvertOptions o{.pixels = 16, .tol = 1e-12};
        auto i1 = forward(fan, bump_field({0.2, 0}, 0.4, 1.0));
        auto i2 = forward(fan, gaussian_field({-0.3, 0.1}, 0.2, 1.0));
        RayImage i12 = i1;
        for (std::size_t k = 0; k < i12.values.size(); ++k) i12.values[k] += i2.values[k];
        auto r1 = invert(i1, o), r2 = invert(i2, o), r12 = invert(i12, o);
        double d = l2_distance(r12.field, sum(r1.field, r2.field), m);
        CHECK(d < 1e-8 * l2_norm(r12.field, m));
    }
    SUBCASE("round trip error decreases under refinement") {
        Field f = gaussian_field({0, 0}, 0.3, 1.0);
        double prev = 1e9;
        const int levels[3][3] = {{32, 16, 16}, {64, 32, 32}, {128, 64, 64}};
        for (auto& lv : levels) {
            auto fan = make_fan(m, m.outer(), lv[0], lv[1]);
            auto r = invert(forward(fan, f), {.pixels = lv[2]});
            double err = l2_distance(r.field, f, m) / l2_norm(f, m);
            CHECK(err < prev);
            prev = err;
        }
        CHECK(prev < 0.05);
    }
    SUBCASE("regularization weight must be positive") {
        auto fan = make_fan(m, m.outer(), 8, 4);
        CHECK_THROWS_AS(invert(forward(fan, zero_field()), {.lambda_reg = 0.0}), InvalidArgument);
    }
    SUBCASE("iteration cap raises with the residual history") {
        auto fan = make_fan(m, m.outer(), 32, 16);
        try {
            invert(forward(fan, constant_field(1.0)), {.pixels = 16, .max_iter = 2, .tol = 1e-14});
            FAIL("expected nonconvergence");
        } catch (const NonConvergence& e) {
            CHECK(e.residuals.size() == 3);
        }
    }
}

TEST_CASE("fiber mixing identity leaves the inversion unchanged") {
    Manifold m(euclidean_metric(), {{0, 0}, 1.0}, {{0, 0}, 1.25});
    auto fan = make_fan(m, m.outer(), 32, 16);
    std::vector<double> id(16 * 16, 0.0);
    for (int i = 0; i < 16; ++i) id[i * 16 + i] = 1.0;
    FiberMixing B(16, id);
    auto img = forward(fan, gaussian_field({0, 0}, 0.3, 1.0));
    auto a = invert(img, {.pixels = 16, .tol = 1e-12});
    auto b = invert(img, {.pixels = 16, .tol = 1e-12, .mixing = &B});
    CHECK(l2_distance(a.field, b.field, m) < 1e-9);
}

TEST_CASE("kinetic equation") {
    Manifold m = unit_disk();
    std::vector<PhasePoint> pts;
    for (double r : {0.0, 0.3, 0.6})
        for (double th : {0.0, 1.0, 2.5, 4.0}) pts.push_back({{r * std::cos(th), r * std::sin(th)}, {std::cos(th + 0.7), std::sin(th + 0.7)}});
    SUBCASE("f = 1 on the Euclidean disk") {
        auto rep = kinetic_check(m, constant_field(1.0), pts, 1e-3, 0.005);
        CHECK(rep.evaluated == int(pts.size()));
        CHECK(rep.max_residual < 1e-3);
    }
    SUBCASE("f = 0") { CHECK(kinetic_check(m, zero_field(), pts, 1e-3).max_residual == 0.0); }
    SUBCASE("residual does not grow as the flow step shrinks") {
        Manifold h(constant_curvature_metric(-1.0, {-0.95, 0.95, -0.95, 0.95}), {{0, 0}, 0.5}, {{0, 0}, 0.6});
        std::vector<PhasePoint> q = {{{0.1, 0.05}, {0.6, 0.3}}, {{-0.2, 0.1}, {0.1, -0.9}}};
        for (auto& p : q) p.xi = (1.0 / std::sqrt(h.metric().g_at(p.x).quad(p.xi))) * p.xi;
        Field f = gaussian_field({0, 0}, 0.2, 1.0);
        double r1 = kinetic_check(h, f, q, 0.04, 1e-3).max_residual;
        double r2 = kinetic_check(h, f, q, 0.02, 1e-3).max_residual;
        CHECK(r2 < 0.6 * r1);
    }
    SUBCASE("samples too close to the boundary are skipped") {
        std::vector<PhasePoint> q = {{{0.9999, 0}, {1, 0}}};
        auto rep = kinetic_check(m, constant_field(1.0), q, 1e-3);
        CHECK(rep.skipped == 1);
        CHECK(rep.evaluated == 0);
    }
    SUBCASE("u is homogeneous of degree -1 in xi") {
        Field f = gaussian_field({0.1, 0}, 0.3, 1.0);
        PhasePoint p{{0.2, -0.1}, {0.6, 0.8}};
        double u1 = ray_integral(m.metric(), p, f, m.outer(), 0.002);
        // arclength steps make the sum independent of the speed up to quadrature
        double u2 = ray_integral(m.metric(), {p.x, 2.0 * p.xi}, f, m.outer(), 0.002);
        CHECK(std::abs(u2 - 0.5 * u1) < 1e-6);
    }
}

TEST_CASE("stability ratio") {
    Manifold m(euclidean_metric(), {{0, 0}, 1.0}, {{0, 0}, 1.25});
    std::vector<Field> ph;
    for (int s = 0; s < 6; ++s) ph.push_back(band_limited_phantom(100 + s, 3, m.inner()));
    auto a = stability_ratio(m, ph, 32, 16);
    auto b = stability_ratio(m, ph, 64, 32);
    CHECK(a.ratios.size() == ph.size());
    CHECK(a.anomalies == 0);
    CHECK(std::isfinite(a.max));
    CHECK(std::abs(b.max - a.max) < 0.1 * a.max);
    auto c = stability_ratio(m, {ph[0], scaled(ph[0], 2.0)}, 32, 16);
    CHECK(c.ratios[0] == doctest::Approx(c.ratios[1]).epsilon(1e-12));
    Manifold sphere(constant_curvature_metric(1.0, {-2, 2, -2, 2}), {{0, 0}, 1.0}, {{0, 0}, 1.5});
    CHECK_THROWS_AS(stability_ratio(sphere, ph, 8, 4), InvalidArgument);
}
