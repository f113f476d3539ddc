#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "geowave/geodesics.hpp"

using namespace geowave;

namespace {

// chord root of |y + t xi| = 1 by bisection
double circle_chord(Vec2 y, Vec2 xi) {
    double lo = 1e-9, hi = 3.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (norm(y + mid * xi) < 1.0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// brute-force distance: relax a polygonal path to a local minimum of length
double path_length_oracle(const MetricField& g, Vec2 a, Vec2 b, int n) {
    std::vector<Vec2> p(n + 1);
    for (int i = 0; i <= n; ++i) p[i] = a + (double(i) / n) * (b - a);
    auto seg = [&](Vec2 u, Vec2 v) { return std::sqrt(g.g_at(0.5 * (u + v)).quad(v - u)); };
    auto total = [&] {
        double s = 0;
        for (int i = 0; i < n; ++i) s += seg(p[i], p[i + 1]);
        return s;
    };
    double h = 1e-6;
    for (int sweep = 0; sweep < 4000; ++sweep) {
        for (int i = 1; i < n; ++i) {
            auto local = [&](Vec2 q) { return seg(p[i - 1], q) + seg(q, p[i + 1]); };
            for (int k = 0; k < 2; ++k) {
                Vec2 e{k == 0 ? h : 0.0, k == 1 ? h : 0.0};
                double fp = local(p[i] + e), f0 = local(p[i]), fm = local(p[i] - e);
                double d2 = (fp - 2 * f0 + fm) / (h * h);
                if (d2 <= 0) continue;
                double dx = std::clamp(-(fp - fm) / (2 * h) / d2, -0.01, 0.01);
                Vec2 q = p[i];
                q[k] += dx;
                if (local(q) < f0) p[i] = q;
            }
        }
    }
    return total();
}

}  // namespace

TEST_CASE("flow basics") {
    auto e = euclidean_metric();
    auto p = flow(e, {{0, 0}, {1, 0}}, 0.5, 0.01);
    CHECK(p.x.x == doctest::Approx(0.5));
    CHECK(p.x.y == doctest::Approx(0.0));
    CHECK(p.xi.x == doctest::Approx(1.0));
    auto q = flow(constant_curvature_metric(1.0), {{0.1, 0.2}, {0.3, 0.1}}, 0.0, 0.01);
    CHECK(q.x.x == 0.1);
    CHECK(q.xi.y == 0.1);
}

TEST_CASE("hyperbolic diameter stays on the diameter") {
    auto h = constant_curvature_metric(-1.0, {-0.95, 0.95, -0.95, 0.95});
    // g = 4/(1-|x|^2)^2 at the origin gives |e1|_g = 2
    auto p = flow(h, {{0, 0}, {0.5, 0}}, 1.0, 0.005);
    CHECK(std::abs(p.x.y) < 1e-14);
    // hyperbolic distance from 0 to r is 2 atanh(r)
    CHECK(p.x.x == doctest::Approx(std::tanh(0.5)).epsilon(1e-10));
}

TEST_CASE("unit speed, reversibility and group law") {
    auto g = sound_speed_metric(0.2, {0.1, 0.1}, 0.4, {-2, 2, -2, 2});
    Vec2 x{-0.9, 0.05};
    Vec2 xi{1.0, 0.2};
    xi = xi / std::sqrt(g.eval(x).g.quad(xi));
    double step = 0.005;
    PhasePoint p{x, xi};
    for (double t : {0.5, 1.0, 1.8}) {
        auto q = flow(g, p, t, step);
        CHECK(std::abs(std::sqrt(g.eval(q.x).g.quad(q.xi)) - 1.0) < 1e-8);
        auto back = flow(g, q, -t, step);
        CHECK(norm(back.x - x) < 1e-8);
        CHECK(norm(back.xi - xi) < 1e-8);
    }
    auto ab = flow(g, flow(g, p, 0.7, step), 0.6, step);
    auto c = flow(g, p, 1.3, step);
    CHECK(norm(ab.x - c.x) < 1e-8);
    CHECK_THROWS_AS(flow(g, p, 50.0, step), OutOfDomain);
}

TEST_CASE("exit time") {
    auto e = euclidean_metric();
    Disk unit{{0, 0}, 1.0};
    CHECK(exit_time(e, {{-1, 0}, {1, 0}}, unit, 0.01).time == doctest::Approx(2.0).epsilon(1e-12));
    // entry angle pi/4 from the inward normal at (-1, 0)
    Vec2 xi{std::cos(pi / 4), std::sin(pi / 4)};
    double l = exit_time(e, {{-1, 0}, xi}, unit, 0.01).time;
    CHECK(std::abs(l - std::sqrt(2.0)) < 1e-10);
    CHECK(std::abs(l - circle_chord({-1, 0}, xi)) < 1e-10);
    CHECK(exit_time(e, {{-1, 0}, {-1, 0.3}}, unit, 0.01).time == 0.0);
    CHECK(exit_time(e, {{0.2, -0.3}, {0.6, 0.8}}, unit, 0.01).time ==
          doctest::Approx(circle_chord({0.2, -0.3}, {0.6, 0.8})).epsilon(1e-12));

    auto g = sound_speed_metric(0.15, {0.2, 0.0}, 0.5, {-2, 2, -2, 2});
    Vec2 x{0.1, -0.2};
    Vec2 d{0.3, 0.9};
    d = d / std::sqrt(g.eval(x).g.quad(d));
    auto r = exit_time(g, {x, d}, unit, 0.005);
    CHECK(std::abs(unit.level(r.end.x)) < 1e-9);
    CHECK_FALSE(r.grazing);
    double lm = exit_time_backward(g, {x, -d}, unit, 0.005);
    CHECK(std::abs(r.time + lm) < 1e-12);
    // a ray just inside tangency is flagged
    Vec2 t{std::cos(1e-5), std::sin(1e-5)};
    CHECK(exit_time(e, {{0, -1}, {t.x, t.y}}, unit, 0.01).grazing);
}

TEST_CASE("exponential map") {
    auto e = euclidean_metric();
    CHECK(exp_map(e, {0.1, 0.2}, {0, 0}, 0.01).x == 0.1);
    auto q = exp_map(e, {0, 0}, {0.3, 0.4}, 0.01);
    CHECK(q.x == doctest::Approx(0.3));
    CHECK(q.y == doctest::Approx(0.4));
    auto g = conformal_linear_metric(0.4);
    Vec2 y{-0.3, 0.1};
    Vec2 xi = Vec2{0.6, 0.8} / std::sqrt(g.eval(y).g.quad({0.6, 0.8}));
    auto a = exp_map(g, y, 0.9 * xi, 0.01);
    auto b = flow(g, {y, xi}, 0.9, 0.01).x;
    CHECK(norm(a - b) < 1e-14);
}

TEST_CASE("distance") {
    auto e = euclidean_metric();
    auto d = distance(e, {-1, 0}, {0, 0});
    CHECK(d.rho == 1.0);
    CHECK(d.grad.x == 1.0);
    CHECK(d.grad.y == 0.0);
    CHECK(distance(e, {0.3, 0.3}, {0.3, 0.3}).rho == 0.0);

    auto g = sound_speed_metric(0.1, {0.1, 0.1}, 0.5, {-2, 2, -2, 2});
    Vec2 y{-1.2, 0.0};
    for (Vec2 x : {Vec2{0.0, 0.0}, Vec2{0.5, 0.4}, Vec2{0.2, -0.6}}) {
        auto r = distance(g, y, x, {0.005});
        double oracle = path_length_oracle(g, y, x, 60);
        CHECK(std::abs(r.rho - oracle) < 1e-3);
        CHECK(std::abs(std::sqrt(g.eval(x).g.quad(r.grad)) - 1.0) < 1e-8);
    }
}

TEST_CASE("eikonal residual") {
    std::vector<Vec2> pts;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
            Vec2 p{-0.8 + 1.6 * i / 6, -0.8 + 1.6 * j / 6};
            if (norm(p) < 0.9) pts.push_back(p);
        }
    CHECK(eikonal_residual(euclidean_metric(), {-1.2, 0}, pts, 0.0) < 1e-10);
    auto g = sound_speed_metric(0.1, {0.1, 0.1}, 0.5, {-2, 2, -2, 2});
    CHECK(eikonal_residual(g, {-1.2, 0}, pts, 1e-4, {0.01}) < 1e-3);
}

TEST_CASE("polar volume") {
    auto e = euclidean_metric();
    CHECK(polar_volume(e, {0, 0}, 0.7, {1, 0}, 0.01) == doctest::Approx(0.49).epsilon(1e-12));
    double a = polar_volume(e, {0, 0}, 1e-3, {0, 1}, 0.01);
    CHECK(a == doctest::Approx(1e-6).epsilon(1e-9));
    // unit-curvature sphere: Jacobi field sin r
    auto s = constant_curvature_metric(1.0);
    Vec2 xi{0.5, 0.0};  // |e1|_g = 2 at the origin
    double prev = 1;
    for (double step : {0.02, 0.01, 0.005}) {
        double err = std::abs(polar_volume(s, {0, 0}, 1.2, xi, step) - std::pow(std::sin(1.2), 2));
        CHECK(err < 1e-5);
        CHECK(err <= prev);
        prev = err;
    }
    // consistency with the shooting solution on a perturbed metric
    auto g = sound_speed_metric(0.1, {0.1, 0.1}, 0.5, {-2, 2, -2, 2});
    FiberFrame f = chart_frame(g, {-1.2, 0});
    auto pp = polar_coordinates(g, f, {0.3, 0.2}, {0.005});
    CHECK(pp.alpha == doctest::Approx(polar_volume(g, f.y, pp.r, f.direction(pp.beta), 0.005)).epsilon(1e-8));
}
