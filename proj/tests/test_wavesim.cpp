#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "geowave/wavesim.hpp"

using namespace geowave;

namespace {

// sin^4 pulse on (0, len)
double pulse(double s, double len = 1.0) {
    if (s <= 0.0 || s >= len) return 0.0;
    double q = std::sin(pi * s / len);
    return q * q * q * q;
}
double pulse_d(double s, double len = 1.0) {
    if (s <= 0.0 || s >= len) return 0.0;
    double q = std::sin(pi * s / len);
    return 4.0 * q * q * q * std::cos(pi * s / len) * pi / len;
}

Manifold unit_disk() { return Manifold(euclidean_metric(), {{0, 0}, 1.0}, {{0, 0}, 1.25}); }

struct PlaneWave {
    double interior = 0.0, neumann = 0.0;
};

// w(t - x.e - 1) launched from the boundary; the shift keeps it zero at t = 0
PlaneWave plane_wave_errors(int cells) {
    Manifold m = unit_disk();
    const Vec2 e{std::cos(0.3), std::sin(0.3)};
    auto exact = [&](Vec2 x, double t) { return pulse(t - dot(x, e) - 1.0); };
    WaveConfig cfg;
    cfg.cells = cells;
    cfg.T = 2.4;
    auto g = make_wave_grid(m, cfg);
    double num = 0.0, den = 0.0;
    SolveOptions opt;
    opt.observer = [&](int n, const cvec& u) {
        double t = n * g->dt();
        for (int k : g->interior()) {
            double v = exact(g->node(k), t);
            num += std::norm(u[k] - v);
            den += v * v;
        }
    };
    auto r = solve_ibvp(g, {}, analytic_data("plane", [&](Vec2 x, double t) { return Complex(exact(x, t)); }), opt);
    double tn = 0.0, td = 0.0;
    for (std::size_t it = 0; it < r.trace.ntimes(); ++it)
        for (std::size_t ip = 0; ip < r.trace.npoints(); ++ip) {
            double a = r.trace.angles[ip];
            Vec2 nu{std::cos(a), std::sin(a)};
            double ref = -pulse_d(r.trace.times[it] - dot(nu, e) - 1.0) * dot(e, nu);
            tn += std::norm(r.trace.at(it, ip) - ref);
            td += ref * ref;
        }
    return {std::sqrt(num / den), std::sqrt(tn / td)};
}

DataPtr smooth_data(const std::string& key, double shift, double T) {
    // vanishes near t = 0 and t = T
    return analytic_data(key, [=](Vec2 x, double t) {
        double th = std::atan2(x.y, x.x);
        double s = t / T;
        double env = s > 0.05 && s < 0.95 ? std::pow(std::sin(pi * (s - 0.05) / 0.9), 4) : 0.0;
        return Complex(std::cos(2 * th + shift), 0.5 * std::sin(th - shift)) * env * std::cos(6.0 * t + shift);
    });
}

}  // namespace

TEST_CASE("zero data gives a zero field and trace") {
    auto g = make_wave_grid(unit_disk(), {.cells = 32});
    auto r = solve_ibvp(g, {}, zero_data());
    for (auto v : r.trace.values) CHECK(v == Complex{});
    for (auto v : r.final_u) CHECK(v == Complex{});
    CHECK(r.trace.compatible);
}

TEST_CASE("plane wave oracle at the default resolution with second-order refinement") {
    PlaneWave coarse = plane_wave_errors(64);
    PlaneWave fine = plane_wave_errors(128);
    MESSAGE("interior " << coarse.interior << " -> " << fine.interior << ", neumann " << coarse.neumann << " -> "
                        << fine.neumann);
    CHECK(fine.interior < 0.02);
    CHECK(fine.neumann < 0.03);
    CHECK(std::log2(coarse.interior / fine.interior) >= 1.8);
}

TEST_CASE("manufactured solution on a metric with a mixed term, damping and potential") {
    // u = rho(t) H(x); F = u_tt + a u_t + q u - rho Delta_g H
    Manifold m(polynomial_metric(0.2), {{0, 0}, 1.0}, {{0, 0}, 1.25});
    const MetricField& met = m.metric();
    auto H = [](Vec2 x) { return std::sin(1.3 * x.x + 0.4) * std::cos(0.9 * x.y - 0.2); };
    auto grad = [&](Vec2 x) {
        const double h = 1e-5;
        return Vec2{(H(x + Vec2{h, 0}) - H(x - Vec2{h, 0})) / (2 * h),
                    (H(x + Vec2{0, h}) - H(x - Vec2{0, h})) / (2 * h)};
    };
    auto flux = [&](Vec2 x) {
        MetricSample s = met.eval(x);
        return s.ginv.apply(grad(x)) * s.sqrt_det;
    };
    auto lap = [&](Vec2 x) {
        const double h = 1e-3;
        double d = (flux(x + Vec2{h, 0}).x - flux(x - Vec2{h, 0}).x + flux(x + Vec2{0, h}).y -
                    flux(x - Vec2{0, h}).y) /
                   (2 * h);
        return d / met.eval(x).sqrt_det;
    };
    auto rho = [](double t) { return pulse(t - 0.1, 1.5); };
    auto rho_t = [](double t) { return pulse_d(t - 0.1, 1.5); };
    auto rho_tt = [&](double t) {
        const double h = 1e-4;
        return (rho_t(t + h) - rho_t(t - h)) / (2 * h);
    };
    Coefficients c;
    c.a = gaussian_field({0.2, -0.1}, 0.4, 0.8);
    c.q = gaussian_field({-0.3, 0.2}, 0.3, 1.5);
    std::function<Complex(Vec2, double)> F = [&](Vec2 x, double t) {
        return Complex(rho_tt(t) * H(x) + c.a(x) * rho_t(t) * H(x) + c.q(x) * rho(t) * H(x) - rho(t) * lap(x));
    };
    auto data = analytic_data("mms", [&](Vec2 x, double t) { return Complex(rho(t) * H(x)); });

    std::vector<double> err_u, err_n;
    for (int cells : {48, 96}) {
        WaveConfig cfg;
        cfg.cells = cells;
        cfg.T = 2.0;
        auto g = make_wave_grid(m, cfg);
        SolveOptions opt;
        opt.source = F;
        double num = 0.0, den = 0.0;
        opt.observer = [&](int n, const cvec& u) {
            double t = n * g->dt();
            for (int k : g->interior()) {
                double v = rho(t) * H(g->node(k));
                num += std::norm(u[k] - v);
                den += v * v;
            }
        };
        auto r = solve_ibvp(g, c, data, opt);
        double tn = 0.0, td = 0.0;
        for (std::size_t it = 0; it < r.trace.ntimes(); ++it)
            for (std::size_t ip = 0; ip < r.trace.npoints(); ++ip) {
                double a = r.trace.angles[ip];
                Vec2 x{std::cos(a), std::sin(a)};
                MetricSample s = met.eval(x);
                Vec2 gn = s.ginv.apply(x);
                double ref = rho(r.trace.times[it]) * dot(gn, grad(x)) / std::sqrt(dot(x, gn));
                tn += std::norm(r.trace.at(it, ip) - ref);
                td += ref * ref;
            }
        err_u.push_back(std::sqrt(num / den));
        err_n.push_back(std::sqrt(tn / td));
    }
    MESSAGE("interior " << err_u[0] << " -> " << err_u[1] << ", conormal " << err_n[0] << " -> " << err_n[1]);
    CHECK(err_u[1] < 0.01);
    CHECK(err_n[1] < 0.02);
    CHECK(err_u[0] / err_u[1] > 3.0);
    CHECK(err_n[0] / err_n[1] > 2.0);
}

TEST_CASE("energy is conserved without damping, potential and source") {
    for (auto m : {Manifold(constant_curvature_metric(-1.0), {{0, 0}, 0.5}, {{0, 0}, 0.6}),
                   Manifold(polynomial_metric(0.2), {{0, 0}, 1.0}, {{0, 0}, 1.25})}) {
        auto g = make_wave_grid(m, {.cells = 64, .T = 3.0});
        SolveOptions opt;
        opt.want_trace = false;
        opt.want_energy = true;
        double R = m.inner().radius;
        auto r = solve_free(g, {}, [&](Vec2 x) { return std::exp(-20 * dot(x, x) / (R * R)); },
                            [](Vec2) { return 0.0; }, opt);
        auto [lo, hi] = std::minmax_element(r.energy.begin(), r.energy.end());
        double drift = (*hi - *lo) / r.energy.front();
        MESSAGE(m.describe() << " drift " << drift);
        CHECK(drift < 0.005);
    }
}

TEST_CASE("a stable run stays bounded over a long horizon") {
    for (int cells : {64, 128}) {
        auto g = make_wave_grid(unit_disk(), {.cells = cells, .T = 20.0});
        SolveOptions opt;
        opt.want_trace = false;
        auto r = solve_free(g, {}, [](Vec2 x) { return std::exp(-20 * dot(x, x)); }, [](Vec2) { return 0.0; }, opt);
        CHECK(r.max_abs <= 1.0 + 1e-12);
    }
}

TEST_CASE("dtn is linear and thread layouts agree") {
    Manifold m = unit_disk();
    Coefficients c{gaussian_field({0.1, 0.2}, 0.3, 0.7), bump_field({-0.2, 0}, 0.5, 2.0)};
    auto g = make_wave_grid(m, {.cells = 40, .T = 2.4});
    DtnOperator op(g, c);
    DataPtr f1 = smooth_data("f1", 0.0, 2.4), f2 = smooth_data("f2", 0.7, 2.4);
    Complex c1{0.3, -1.1}, c2{2.0, 0.5};
    BoundarySignal a = op.apply(f1), b = op.apply(f2), ab = op.apply(combine(f1, c1, f2, c2));
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ab.values.size(); ++k) {
        num += std::norm(ab.values[k] - (c1 * a.values[k] + c2 * b.values[k]));
        den += std::norm(ab.values[k]);
    }
    CHECK(std::sqrt(num / den) < 1e-8);

    auto gs = make_wave_grid(m, {.cells = 40, .T = 2.4, .exec = Exec::serial});
    BoundarySignal s = DtnOperator(gs, c).apply(f1);
    for (std::size_t k = 0; k < s.values.size(); ++k) CHECK(s.values[k] == a.values[k]);
}

TEST_CASE("discrete reciprocity against the backward equation") {
    Manifold m = unit_disk();
    Coefficients c{gaussian_field({0.1, 0.2}, 0.3, 1.0), bump_field({-0.2, 0}, 0.5, 2.0)};
    const double T = 2.4;
    auto g = make_wave_grid(m, {.cells = 96, .T = T});
    DtnOperator op(g, c);
    DataPtr f = smooth_data("rf", 0.0, T), h = smooth_data("rh", 1.3, T);
    Complex lhs = signal_pairing(sample_data(*g, h), op.apply(f));
    Complex rhs = signal_pairing(op.apply_adjoint(h), sample_data(*g, f));
    MESSAGE("<Lf,h> = " << lhs << ", <f,L*h> = " << rhs);
    CHECK(std::abs(lhs - rhs) < 0.02 * std::abs(lhs));
}

TEST_CASE("configuration errors are refused before stepping") {
    Manifold m = unit_disk();
    CHECK_THROWS_AS(WaveGrid(m, {.cfl = 1.0}), InvalidArgument);
    CHECK_THROWS_AS(WaveGrid(m, {.cfl = 0.0}), InvalidArgument);
    CHECK_THROWS_AS(WaveGrid(m, {.cells = 4}), GridTooCoarse);
    CHECK_THROWS_AS(WaveGrid(m, {.trace_order = 3}), InvalidArgument);
    CHECK_NOTHROW(WaveGrid(m, {.cells = 16, .trace_order = 3, .trace_pde = false}));
    auto g = make_wave_grid(m, {.cells = 32});
    CHECK(g->cfl_ratio() <= 0.5 + 1e-12);
    CHECK_THROWS_AS(check_horizon(m, 2.0, 0.2), InvalidArgument);
    CHECK_NOTHROW(check_horizon(m, 3.0, 0.2));
}

TEST_CASE("growth beyond the data scale raises an instability error") {
    // strong anti-damping grows like exp(25 t)
    auto g = make_wave_grid(unit_disk(), {.cells = 24, .T = 3.0});
    Coefficients c{constant_field(-50.0), zero_field()};
    CHECK_THROWS_AS(solve_ibvp(g, c, smooth_data("grow", 0.0, 3.0)), Instability);
}

TEST_CASE("incompatible data is flagged") {
    auto g = make_wave_grid(unit_disk(), {.cells = 24, .T = 2.4});
    auto r = solve_ibvp(g, {}, analytic_data("one", [](Vec2, double) { return Complex(1.0); }));
    CHECK_FALSE(r.trace.compatible);
}

TEST_CASE("response cache in memory and on disk") {
    auto dir = std::filesystem::temp_directory_path() / "geowave_cache_test";
    std::filesystem::remove_all(dir);
    auto g = make_wave_grid(unit_disk(), {.cells = 24, .T = 2.4});
    DataPtr f = smooth_data("cache", 0.2, 2.4);
    DtnOperator a(g, {}, dir);
    BoundarySignal s1 = a.apply(f);
    BoundarySignal s2 = a.apply(f);
    CHECK(a.solves() == 1);
    CHECK(a.cache_hits() == 1);
    DtnOperator b(g, {}, dir);
    BoundarySignal s3 = b.apply(f);
    CHECK(b.solves() == 0);
    CHECK(b.cache_hits() == 1);
    CHECK(s3.values == s1.values);
    CHECK(s3.times == s1.times);
    // different coefficients never share an entry
    DtnOperator c(g, {constant_field(0.1), zero_field()}, dir);
    CHECK(c.key(f, false) != a.key(f, false));
    CHECK(a.key(f, false) != a.key(f, true));
    std::filesystem::remove_all(dir);
}

TEST_CASE("signal csv layout") {
    auto g = make_wave_grid(unit_disk(), {.cells = 16, .T = 2.4, .trace_points = 8, .trace_stride = 8});
    BoundarySignal s = sample_data(*g, smooth_data("csv", 0.0, 2.4));
    auto p = std::filesystem::temp_directory_path() / "geowave_signal.csv";
    write_signal_csv(s, p);
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    CHECK(line == "s,t,re,im");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == int(s.values.size()));
    std::filesystem::remove(p);
}

TEST_CASE("gap norm: zero, monotone in the probe set, and shrinking with the perturbation") {
    Manifold m = unit_disk();
    auto g = make_wave_grid(m, {.cells = 40, .T = 2.4});
    Field bump = bump_field({0.2, 0.1}, 0.4, 1.0);
    DtnOperator base(g, {}), same(g, {}), full(g, {bump, zero_field()}), half(g, {scaled(bump, 0.5), zero_field()});
    std::vector<DataPtr> probes{smooth_data("p0", 0.0, 2.4), smooth_data("p1", 1.0, 2.4),
                                smooth_data("p2", 2.0, 2.4)};
    CHECK(dtn_gap_norm(base, same, probes, 1).value == 0.0);
    double prev = 0.0;
    for (std::size_t n = 1; n <= probes.size(); ++n) {
        std::vector<DataPtr> sub(probes.begin(), probes.begin() + n);
        double v = dtn_gap_norm(full, base, sub, 0).value;
        CHECK(v >= prev);
        prev = v;
    }
    GapEstimate ef = dtn_gap_norm(full, base, probes, 1);
    GapEstimate eh = dtn_gap_norm(half, base, probes, 1);
    MESSAGE("gap full " << ef.value << " half " << eh.value);
    CHECK(ef.value > 0.0);
    CHECK(eh.value < ef.value);
    CHECK(eh.value / ef.value == doctest::Approx(0.5).epsilon(0.1));
    CHECK_THROWS_AS(dtn_gap_norm(full, base, {}), InvalidArgument);
}

TEST_CASE("energy residual ratio") {
    Manifold m = unit_disk();
    auto zero_src = [](Vec2, double) { return Complex{}; };
    CHECK(energy_residual(make_wave_grid(m, {.cells = 24, .T = 2.4}), {}, zero_src).ratio == 0.0);
    auto src = [](Vec2 x, double t) { return Complex(pulse(t, 1.0) * std::exp(-10 * dot(x, x))); };
    double r64 = energy_residual(make_wave_grid(m, {.cells = 64, .T = 2.4}), {}, src).ratio;
    double r128 = energy_residual(make_wave_grid(m, {.cells = 128, .T = 2.4}), {}, src).ratio;
    MESSAGE("ratio " << r64 << " -> " << r128);
    CHECK(std::isfinite(r128));
    CHECK(std::abs(r64 - r128) < 0.1 * r128);
    double damped = energy_residual(make_wave_grid(m, {.cells = 64, .T = 2.4}),
                                    {gaussian_field({0, 0}, 0.5, 1.0), zero_field()}, src)
                        .ratio;
    CHECK(damped <= r64);
}
