#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "geowave/xray.hpp"

namespace geowave::cli {

namespace fs = std::filesystem;

Mode parse_mode(const std::string& s) {
    if (s == "full") return Mode::full;
    if (s == "bypass") return Mode::bypass;
    if (s == "verify-only") return Mode::verify_only;
    throw InvalidArgument("mode must be full, bypass or verify-only, got '" + s + "'");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::bypass: return "bypass";
        default: return "verify-only";
    }
}

Field BumpSpec::field() const { return amplitude == 0.0 ? zero_field() : bump_field(center, radius, amplitude); }

Manifold RunConfig::manifold() const {
    MetricField g = euclidean_metric();
    if (metric == "conformal") g = conformal_linear_metric(metric_param);
    else if (metric == "constant_curvature") g = constant_curvature_metric(metric_param);
    else if (metric == "sound_speed") g = sound_speed_metric(metric_param, {0.0, 0.0}, 0.5);
    else if (metric == "polynomial") g = polynomial_metric(metric_param);
    return Manifold(g, {{0, 0}, inner_radius}, {{0, 0}, outer_radius});
}

// ---- configuration ----

namespace {

[[noreturn]] void refuse(const Config& c, const std::string& key, const std::string& msg) {
    int line = c.line_of(key);
    throw ConfigError((line ? "line " + std::to_string(line) + ": " : "") + "'" + key + "' " + msg, line);
}

int positive_int(const Config& c, const std::string& key, long fallback) {
    long v = c.integer(key, fallback);
    if (v <= 0) refuse(c, key, "must be positive");
    return int(v);
}

double positive(const Config& c, const std::string& key, double fallback) {
    double v = c.number(key, fallback);
    if (!(v > 0.0)) refuse(c, key, "must be positive");
    return v;
}

bool flag(const Config& c, const std::string& key, bool fallback) {
    long v = c.integer(key, fallback ? 1 : 0);
    if (v != 0 && v != 1) refuse(c, key, "must be 0 or 1");
    return v == 1;
}

BumpSpec bump(const Config& c, const std::string& p, const BumpSpec& d) {
    BumpSpec b;
    b.center = {c.number(p + "_center_x_chart", d.center.x), c.number(p + "_center_y_chart", d.center.y)};
    b.radius = positive(c, p + "_radius_chart", d.radius);
    b.amplitude = c.number(p + "_amplitude", d.amplitude);
    return b;
}

}  // namespace

RunConfig load_run_config(const Config& src) {
    Config c = src;
    RunConfig rc;
    rc.metric = c.text("metric", rc.metric);
    static const std::set<std::string> metrics = {"euclidean", "conformal", "constant_curvature", "sound_speed",
                                                  "polynomial"};
    if (!metrics.count(rc.metric))
        refuse(c, "metric", "must be one of euclidean, conformal, constant_curvature, sound_speed, polynomial");
    rc.metric_param = c.number("metric_param", rc.metric_param);
    rc.inner_radius = positive(c, "inner_radius_chart", rc.inner_radius);
    rc.outer_radius = positive(c, "outer_radius_chart", rc.outer_radius);
    if (rc.outer_radius <= rc.inner_radius) refuse(c, "outer_radius_chart", "must exceed inner_radius_chart");

    rc.wave.cells = positive_int(c, "grid_cells", rc.wave.cells);
    rc.wave.cfl = positive(c, "cfl_ratio", rc.wave.cfl);
    if (rc.wave.cfl >= 1.0) refuse(c, "cfl_ratio", "= " + fmt17(rc.wave.cfl) + " violates the stability bound (< 1)");
    rc.wave.T = positive(c, "horizon_time", 3.8);
    rc.wave.trace_points = positive_int(c, "trace_points", 512);
    rc.wave.trace_stride = positive_int(c, "trace_stride_steps", 2);
    rc.eps = positive(c, "cutoff_width_time", rc.eps);
    rc.h_sweep = c.list("h_sweep", rc.h_sweep);
    for (double h : rc.h_sweep)
        if (!(h > 0.0 && h <= 0.5)) refuse(c, "h_sweep", "entries must lie in (0, 0.5]");
    rc.h_fixed = c.number("h_fixed", 0.0);
    if (rc.h_fixed < 0.0 || rc.h_fixed > 0.5) refuse(c, "h_fixed", "must lie in (0, 0.5] (0 runs the sweep)");
    rc.remainder_constant = positive(c, "remainder_constant", rc.remainder_constant);
    rc.blur_constant = c.number("blur_constant", rc.blur_constant);
    if (rc.blur_constant < 0.0) refuse(c, "blur_constant", "must be non-negative");

    rc.ns = positive_int(c, "fan_boundary_points", rc.ns);
    rc.nb = positive_int(c, "fan_directions", rc.nb);
    rc.pixels = positive_int(c, "pixels", rc.pixels);
    rc.lambda_reg = positive(c, "lambda_reg", rc.lambda_reg);
    rc.compensate_dispersion = flag(c, "compensate_dispersion", rc.compensate_dispersion);
    rc.deblur = flag(c, "deblur", rc.deblur);
    rc.max_failure_fraction = c.number("max_failure_fraction", rc.max_failure_fraction);
    if (rc.max_failure_fraction < 0.0 || rc.max_failure_fraction > 1.0)
        refuse(c, "max_failure_fraction", "must lie in [0, 1]");
    rc.fiber_quadrature = positive_int(c, "fiber_quadrature", rc.fiber_quadrature);

    rc.known.a = bump(c, "known_a", {});
    rc.known.q = bump(c, "known_q", {});
    rc.unknown.a = bump(c, "unknown_a", {{0.2, -0.1}, 0.5, 0.2});
    rc.unknown.q = bump(c, "unknown_q", {{-0.2, 0.15}, 0.5, 0.3});

    rc.holder_amplitudes = c.list("holder_amplitudes", rc.holder_amplitudes);
    rc.holder_q_ratio = c.number("holder_q_ratio", rc.holder_q_ratio);
    rc.holder_probes = positive_int(c, "holder_probes", rc.holder_probes);
    rc.holder_power_iterations = int(c.integer("holder_power_iterations", rc.holder_power_iterations));
    if (rc.holder_power_iterations < 0) refuse(c, "holder_power_iterations", "must be non-negative");
    rc.holder_swap = flag(c, "holder_swap", rc.holder_swap);

    rc.kappa_checks = c.list("kappa_checks", rc.kappa_checks);
    for (double k : rc.kappa_checks)
        if (!(k > 0.0 && k < 1.0)) refuse(c, "kappa_checks", "entry " + fmt17(k) + " is outside (0, 1)");
    rc.verify_samples = positive_int(c, "verify_samples", rc.verify_samples);

    try {
        rc.mode = parse_mode(c.text("mode", "full"));
    } catch (const InvalidArgument& e) {
        refuse(c, "mode", e.what());
    }
    long seed = c.integer("seed", 1);
    if (seed < 0) refuse(c, "seed", "must be non-negative");
    rc.seed = static_cast<unsigned long>(seed);

    if (auto un = c.unused(); !un.empty()) refuse(c, un.front(), "is not a known key");

    Manifold m = rc.manifold();
    try {
        check_horizon(m, rc.wave.T, rc.eps);
    } catch (const InvalidArgument& e) {
        refuse(c, "horizon_time", e.what());
    }
    rc.source = c;
    return rc;
}

Context make_context(const fs::path& out) {
    Context cx;
    cx.out = out;
    const char* env = std::getenv("GEOWAVE_CACHE_DIR");
    cx.cache = env && *env ? fs::path(env) : out / "cache";
    return cx;
}

void write_manifest(const std::map<std::string, std::string>& entries, const fs::path& p) {
    CsvWriter w(p, {"key", "value"});
    for (const auto& [k, v] : entries) w.row_text({k, v});
}

// ---- shared pieces ----

namespace {

std::ostream& log_of(const Context& cx) { return cx.log ? *cx.log : std::cout; }

std::map<std::string, std::string> base_manifest(const RunConfig& rc, const std::string& command) {
    auto m = rc.source.consumed();
    m["command"] = command;
    m["mode"] = mode_name(rc.mode);
    m["seed"] = std::to_string(rc.seed);
    return m;
}

struct Chosen {
    double h = 0.0, kappa = 0.0;
    HChoice choice;
};

Chosen choose_h(const RunConfig& rc, const WaveGrid& g) {
    Chosen c;
    if (rc.h_fixed > 0.0) {
        check_resolution(g, rc.h_fixed);
        c.h = rc.h_fixed;
    } else {
        c.choice = select_h(rc.h_sweep, g, rc.remainder_constant, rc.blur_constant);
        c.h = c.choice.h;
    }
    c.kappa = kappa_rule(c.h);
    return c;
}

void record_grid(std::map<std::string, std::string>& m, const WaveGrid& g, const Chosen& c) {
    m["derived.dt"] = fmt17(g.dt());
    m["derived.dx"] = fmt17(g.dx());
    m["derived.steps"] = std::to_string(g.steps());
    m["derived.h"] = fmt17(c.h);
    m["derived.kappa"] = fmt17(c.kappa);
    for (std::size_t i = 0; i < c.choice.hs.size(); ++i)
        m["derived.h_bar." + fmt17(c.choice.hs[i])] = fmt17(c.choice.bars[i]);
}

ProbeSpec probe_base(const RunConfig& rc, const WaveGrid& g, double h, const Field& known_a) {
    ProbeSpec s;
    s.h = h;
    s.eps = rc.eps;
    s.a = known_a;
    s.dispersion = rc.compensate_dispersion ? grid_dispersion(g) : GridDispersion{};
    return s;
}

RecoverOptions recover_options(const RunConfig& rc, const Chosen& c) {
    RecoverOptions o;
    o.ns = rc.ns;
    o.nb = rc.nb;
    o.h = c.h;
    o.eps = rc.eps;
    o.compensate_dispersion = rc.compensate_dispersion;
    o.deblur = rc.deblur;
    o.invert.pixels = rc.pixels;
    o.invert.lambda_reg = rc.lambda_reg;
    o.max_failure_fraction = rc.max_failure_fraction;
    o.remainder_constant = rc.remainder_constant;
    o.fiber_quadrature = rc.fiber_quadrature;
    return o;
}

struct Check {
    std::string name;
    double value, tolerance;
    bool upper;  // value must stay below (true) or reach (false) the tolerance
    bool pass() const { return std::isfinite(value) && (upper ? value < tolerance : value >= tolerance); }
};

double pulse(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    double q = std::sin(pi * s);
    return q * q * q * q;
}

double pulse_d(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    double q = std::sin(pi * s);
    return 4.0 * q * q * q * std::cos(pi * s) * pi;
}

}  // namespace

// ---- verify ----

int cmd_verify(const RunConfig& rc, const Context& cx) {
    std::ostream& log = log_of(cx);
    fs::create_directories(cx.out);
    const Manifold m = rc.manifold();
    const MetricField& g = m.metric();
    const bool flat = g.is_flat();
    const double R = m.inner().radius;
    Rng rng(rc.seed);
    std::vector<Check> checks;

    std::vector<Vec2> pts;
    std::vector<PhasePoint> phase;
    for (int i = 0; i < rc.verify_samples; ++i) {
        double r = 0.9 * R * std::sqrt(rng.uniform()), th = rng.uniform(0.0, 2.0 * pi), w = rng.uniform(0.0, 2.0 * pi);
        Vec2 x = m.inner().center + Vec2{r * std::cos(th), r * std::sin(th)};
        Vec2 xi{std::cos(w), std::sin(w)};
        xi = (1.0 / std::sqrt(g.g_at(x).quad(xi))) * xi;
        pts.push_back(x);
        phase.push_back({x, xi});
    }

    const FiberFrame fr = m.boundary_frame(m.outer(), pi);
    checks.push_back({"eikonal", eikonal_residual(g, fr.y, pts, flat ? 0.0 : 1e-4), flat ? 1e-10 : 1e-3, true});

    {
        ProbeSpec s;
        s.eps = rc.eps;
        s.weight = {[](double b) { return std::cos(b); }, "cos"};
        s.a = gaussian_field(m.inner().center + Vec2{0.1 * R, 0.1 * R}, 0.4 * R, 0.5);
        Probe p(m, s);
        const double r0 = m.outer().radius;
        std::vector<Vec2> xs;
        for (double b : {-0.3, -0.1, 0.1, 0.3}) xs.push_back(exp_map(g, fr.y, r0 * fr.direction(b), m.default_step()));
        const double t = r0 + 0.5 * rc.eps;
        double tr_prev = 0, at_prev = 0, tr_order = 1e9, at_order = 1e9;
        for (double fd : {2e-2, 1e-2, 5e-3}) {
            double tr = transport_residual(p, xs, t, fd), at = attenuation_residual(p, xs, t, fd);
            if (tr_prev > 0) {
                tr_order = std::min(tr_order, std::log2(tr_prev / tr));
                at_order = std::min(at_order, std::log2(at_prev / at));
            }
            tr_prev = tr;
            at_prev = at;
        }
        checks.push_back({"transport_order", tr_order, 1.8, false});
        checks.push_back({"attenuation_order", at_order, 1.8, false});
    }

    {
        auto k = kinetic_check(m, constant_field(1.0), phase, 1e-3, 0.005);
        checks.push_back({"kinetic", k.evaluated > 0 ? k.max_residual : NAN, 1e-3, true});
        Field f = gaussian_field(m.inner().center, 0.3 * R, 1.0);
        double worst = 0.0;
        for (const auto& p : phase) {
            double u1 = ray_integral(g, p, f, m.outer(), 0.002);
            double u2 = ray_integral(g, {p.x, 2.0 * p.xi}, f, m.outer(), 0.002);
            worst = std::max(worst, std::abs(u2 - 0.5 * u1));
        }
        checks.push_back({"kinetic_homogeneity", worst, 1e-6, true});
    }

    {
        auto rep = poisson_checks(rc.kappa_checks, 100);
        checks.push_back({"kernel_mass", rep.max_mass_error, 1e-6, true});
        double over = 0.0;
        for (double v : rep.max_over_bound) over = std::max(over, v);
        checks.push_back({"kernel_bound", over, 1.0 + 1e-12, true});
    }

    {
        auto grid = make_wave_grid(m, rc.wave);
        SolveOptions opt;
        opt.want_trace = false;
        opt.want_energy = true;
        auto r = solve_free(grid, {}, [&](Vec2 x) { return std::exp(-20.0 * dot(x - m.inner().center, x - m.inner().center) / (R * R)); },
                            [](Vec2) { return 0.0; }, opt);
        auto [lo, hi] = std::minmax_element(r.energy.begin(), r.energy.end());
        checks.push_back({"energy_drift", (*hi - *lo) / r.energy.front(), 5e-3, true});
    }

    {
        // Euclidean disk of the same radii: w(t - x.e - R) enters through the boundary
        Manifold e(euclidean_metric(), m.inner(), m.outer());
        const Vec2 dir{std::cos(0.3), std::sin(0.3)};
        const Vec2 c0 = m.inner().center;
        auto exact = [&](Vec2 x, double t) { return pulse(t - dot(x - c0, dir) - R); };
        WaveConfig wc = rc.wave;
        wc.T = 2.0 * R + 0.4;
        wc.steps = 0;
        auto grid = make_wave_grid(e, wc);
        double num = 0.0, den = 0.0;
        SolveOptions opt;
        opt.observer = [&](int n, const cvec& u) {
            double t = n * grid->dt();
            for (int k : grid->interior()) {
                double v = exact(grid->node(k), t);
                num += std::norm(u[k] - v);
                den += v * v;
            }
        };
        auto r = solve_ibvp(grid, {}, analytic_data("verify-plane", [&](Vec2 x, double t) { return Complex(exact(x, t)); }), opt);
        double tn = 0.0, td = 0.0;
        for (std::size_t it = 0; it < r.trace.ntimes(); ++it)
            for (std::size_t ip = 0; ip < r.trace.npoints(); ++ip) {
                double a = r.trace.angles[ip];
                Vec2 nu{std::cos(a), std::sin(a)};
                double ref = -pulse_d(r.trace.times[it] - R * dot(nu, dir) - R) * dot(dir, nu);
                tn += std::norm(r.trace.at(it, ip) - ref);
                td += ref * ref;
            }
        checks.push_back({"plane_wave_interior", std::sqrt(num / den), 0.02, true});
        checks.push_back({"plane_wave_neumann", std::sqrt(tn / td), 0.03, true});
    }

    int failed = 0;
    {
        CsvWriter w(cx.out / "verify.csv", {"check", "value", "tolerance", "kind", "pass"});
        for (const auto& ch : checks) {
            w.row_text({ch.name, fmt17(ch.value), fmt17(ch.tolerance), ch.upper ? "below" : "at_least",
                        ch.pass() ? "1" : "0"});
            log << (ch.pass() ? "PASS " : "FAIL ") << ch.name << " = " << fmt17(ch.value)
                << (ch.upper ? " (< " : " (>= ") << fmt17(ch.tolerance) << ")\n";
            if (!ch.pass()) ++failed;
        }
    }
    write_manifest(base_manifest(rc, "verify"), cx.out / "manifest.csv");
    return failed ? 1 : 0;
}

// ---- simulate-dtn ----

int cmd_simulate_dtn(const RunConfig& rc, const Context& cx) {
    std::ostream& log = log_of(cx);
    fs::create_directories(cx.out);
    const Manifold m = rc.manifold();
    auto grid = make_wave_grid(m, rc.wave);
    Chosen ch = choose_h(rc, *grid);
    const Coefficients kc = rc.known.coefficients(), uc = rc.unknown.coefficients();
    DtnOperator known(grid, kc, cx.cache), unknown(grid, uc, cx.cache);
    auto fan = make_fan(m, m.outer(), rc.ns, 1);
    ProbeSpec base = probe_base(rc, *grid, ch.h, kc.a);
    double gap = 0.0;
    {
        CsvWriter w(cx.out / "dtn.csv", {"y_angle", "probe_h1", "known_l2", "unknown_l2", "difference_l2", "ratio"});
        for (int is = 0; is < rc.ns; ++is) {
            ProbeSpec s = base;
            s.y_angle = fan->angle(is);
            DataPtr f = Probe(m, s).boundary_data();
            BoundarySignal a = known.apply(f), b = unknown.apply(f);
            double fn = data_h1_norm(*grid, f), d = signal_l2_norm(signal_difference(a, b));
            gap = std::max(gap, d / fn);
            w.row({s.y_angle, fn, signal_l2_norm(a), signal_l2_norm(b), d, d / fn});
        }
    }
    auto man = base_manifest(rc, "simulate-dtn");
    record_grid(man, *grid, ch);
    man["result.gap_norm"] = fmt17(gap);
    man["result.solves"] = std::to_string(known.solves() + unknown.solves());
    man["result.cache_hits"] = std::to_string(known.cache_hits() + unknown.cache_hits());
    man["cache_dir"] = cx.cache.string();
    write_manifest(man, cx.out / "manifest.csv");
    log << "h = " << fmt17(ch.h) << ", gap norm over " << rc.ns << " probes = " << fmt17(gap) << "\n"
        << "solver runs " << known.solves() + unknown.solves() << ", cache hits "
        << known.cache_hits() + unknown.cache_hits() << "\n";
    return 0;
}

// ---- recover ----

namespace {

double rel_or_abs(const Field& est, const Field& truth, const Manifold& m) {
    double n = l2_norm(truth, m);
    return n > 0.0 ? l2_distance(est, truth, m) / n : l2_norm(est, m);
}

}  // namespace

int cmd_recover(const RunConfig& rc, const Context& cx) {
    std::ostream& log = log_of(cx);
    if (rc.mode == Mode::verify_only) {
        log << "refused: mode verify-only does not run recoveries\n";
        return 2;
    }
    fs::create_directories(cx.out);
    const Manifold m = rc.manifold();
    auto grid = make_wave_grid(m, rc.wave);
    Chosen ch = choose_h(rc, *grid);
    RecoverOptions opt = recover_options(rc, ch);
    auto fan = make_fan(m, m.outer(), rc.ns, rc.nb);
    const Coefficients kc = rc.known.coefficients(), uc = rc.unknown.coefficients();
    const Field a_true = sum(uc.a, scaled(kc.a, -1.0)), q_true = sum(uc.q, scaled(kc.q, -1.0));

    auto man = base_manifest(rc, "recover");
    record_grid(man, *grid, ch);
    StageResult sa, sq;
    std::string stage = "absorption stage";
    try {
        if (rc.mode == Mode::bypass) {
            sa = bypass_absorption(m, a_true, fan, opt);
            auto bc = bypass_blur_check(m, a_true, sa, opt);
            man["result.blur_worst_excess"] = fmt17(bc.worst_excess);
            stage = "potential stage";
            sq = bypass_potential(m, q_true, fan, opt);
            man["result.stage_report"] = "xray+mollifier only";
        } else {
            auto known = std::make_shared<DtnOperator>(grid, kc, cx.cache);
            auto unknown = std::make_shared<DtnOperator>(grid, uc, cx.cache);
            PairingEngine ea(known, unknown, probe_base(rc, *grid, ch.h, kc.a), rc.compensate_dispersion);
            sa = recover_absorption(ea, fan, opt);
            stage = "potential stage";
            double amax = 0.0;
            for (double v : sa.inversion.pixels->values()) amax = std::max(amax, std::abs(v));
            Coefficients k2{sum(kc.a, sa.inversion.field), kc.q};
            auto known2 = std::make_shared<DtnOperator>(grid, k2, cx.cache);
            PairingEngine eq(known2, unknown, probe_base(rc, *grid, ch.h, k2.a), rc.compensate_dispersion);
            sq = recover_potential(eq, fan, opt, amax);
            man["result.a_hat_max"] = fmt17(amax);
            man["result.solves"] = std::to_string(known->solves() + unknown->solves() + known2->solves());
            man["result.cache_hits"] =
                std::to_string(known->cache_hits() + unknown->cache_hits() + known2->cache_hits());
            man["result.stage_report"] = "solver+xray+mollifier";
        }
    } catch (const Error& e) {
        log << "error in " << stage << ": " << e.what() << "\n";
        return 3;
    }

    write_field_csv(sa.inversion, cx.out / "a_hat.csv");
    write_field_csv(sq.inversion, cx.out / "q_hat.csv");
    write_stage_csv(sa, cx.out / "absorption_stage.csv");
    write_stage_csv(sq, cx.out / "potential_stage.csv");
    double ea = rel_or_abs(sa.inversion.field, a_true, m), eq = rel_or_abs(sq.inversion.field, q_true, m);
    double bar_a = 0, bar_q = 0, blur = 0;
    for (std::size_t k = 0; k < sa.error_bar.size(); ++k) {
        bar_a = std::max(bar_a, sa.error_bar[k]);
        bar_q = std::max(bar_q, sq.error_bar[k]);
        blur = std::max(blur, sa.blur[k]);
    }
    man["result.a_error"] = fmt17(ea);
    man["result.q_error"] = fmt17(eq);
    man["result.a_error_kind"] = l2_norm(a_true, m) > 0 ? "relative" : "absolute";
    man["result.q_error_kind"] = l2_norm(q_true, m) > 0 ? "relative" : "absolute";
    man["result.absorption_failures"] = std::to_string(sa.failures);
    man["result.absorption_error_bar"] = fmt17(bar_a);
    man["result.potential_error_bar"] = fmt17(bar_q);
    man["result.blur_moment"] = fmt17(blur);
    man["result.cg_iterations_a"] = std::to_string(sa.inversion.iterations);
    man["result.cg_iterations_q"] = std::to_string(sq.inversion.iterations);
    write_manifest(man, cx.out / "manifest.csv");
    log << mode_name(rc.mode) << " recovery at h = " << fmt17(ch.h) << ", kappa = " << fmt17(ch.kappa) << ": a error "
        << fmt17(ea) << ", q error " << fmt17(eq) << " (" << man["result.stage_report"] << ")\n";
    return 0;
}

// ---- holder ----

int cmd_holder(const RunConfig& rc, const Context& cx) {
    std::ostream& log = log_of(cx);
    if (rc.holder_amplitudes.size() < 4) {
        log << "refused: the Hoelder sweep needs at least 4 amplitudes, got " << rc.holder_amplitudes.size() << "\n";
        return 2;
    }
    fs::create_directories(cx.out);
    const Manifold m = rc.manifold();
    auto grid = make_wave_grid(m, rc.wave);
    Chosen ch = choose_h(rc, *grid);
    const Coefficients kc = rc.known.coefficients();
    DtnOperator known(grid, kc, cx.cache);
    ProbeSpec base = probe_base(rc, *grid, ch.h, kc.a);
    auto fan = make_fan(m, m.outer(), rc.holder_probes, 1);
    std::vector<DataPtr> probes;
    for (int is = 0; is < rc.holder_probes; ++is) {
        ProbeSpec s = base;
        s.y_angle = fan->angle(is);
        probes.push_back(Probe(m, s).boundary_data());
    }
    std::vector<double> gaps, perts;
    int solves = 0, hits = 0;
    {
        CsvWriter w(cx.out / "holder.csv", {"amplitude", "gap_norm", "perturbation"});
        for (double s : rc.holder_amplitudes) {
            Field da = bump_field(rc.unknown.a.center, rc.unknown.a.radius, s);
            Field dq = bump_field(rc.unknown.q.center, rc.unknown.q.radius, s * rc.holder_q_ratio);
            DtnOperator u(grid, {sum(kc.a, da), sum(kc.q, dq)}, cx.cache);
            GapEstimate ge = rc.holder_swap ? dtn_gap_norm(u, known, probes, rc.holder_power_iterations)
                                            : dtn_gap_norm(known, u, probes, rc.holder_power_iterations);
            double p = l2_norm(da, m) + l2_norm(dq, m);
            gaps.push_back(ge.value);
            perts.push_back(p);
            solves += u.solves();
            hits += u.cache_hits();
            w.row({s, ge.value, p});
        }
    }
    HolderFit fit;
    try {
        fit = holder_fit(gaps, perts);
    } catch (const InvalidArgument& e) {
        log << "refused: " << e.what() << "\n";
        return 2;
    }
    {
        CsvWriter w(cx.out / "holder_fit.csv", {"slope", "intercept"});
        w.row({fit.slope, fit.intercept});
    }
    auto man = base_manifest(rc, "holder");
    record_grid(man, *grid, ch);
    man["result.slope"] = fmt17(fit.slope);
    man["result.solves"] = std::to_string(solves + known.solves());
    man["result.cache_hits"] = std::to_string(hits + known.cache_hits());
    write_manifest(man, cx.out / "manifest.csv");
    log << "Hoelder slope " << fmt17(fit.slope) << " over " << gaps.size() << " amplitudes\n";
    return 0;
}

// ---- command line ----

int run(int argc, char** argv, std::ostream& log) {
    CLI::App app{"geowave: wave probes, ray transforms and coefficient recovery"};
    app.require_subcommand(1);
    std::string config_path, out_dir = "geowave_out", mode;
    long seed = -1;
    std::map<std::string, std::function<int(const RunConfig&, const Context&)>> commands = {
        {"verify", cmd_verify},
        {"simulate-dtn", cmd_simulate_dtn},
        {"recover", cmd_recover},
        {"holder", cmd_holder}};
    const std::map<std::string, std::string> help = {
        {"verify", "run the eikonal, transport, kinetic, kernel, energy and plane-wave checks"},
        {"simulate-dtn", "run the probe sweep through both coefficient pairs and cache the responses"},
        {"recover", "recover the absorption and potential and write the fields"},
        {"holder", "fit the Hoelder slope of perturbation against DtN gap over an amplitude sweep"}};
    for (const auto& [name, fn] : commands) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--config", config_path, "flat key = value run configuration");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--mode", mode, "full, bypass or verify-only")
            ->check(CLI::IsMember({"full", "bypass", "verify-only"}));
        sub->add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    RunConfig rc;
    try {
        Config c = config_path.empty() ? Config::parse("") : Config::load(config_path);
        if (!mode.empty()) c.set("mode", mode);
        if (seed >= 0) c.set("seed", std::to_string(seed));
        rc = load_run_config(c);
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        log << "config error: " << e.what() << "\n";
        return 2;
    }
    Context cx = make_context(out_dir);
    cx.log = &log;
    for (const auto& [name, fn] : commands) {
        if (!app.got_subcommand(name)) continue;
        try {
            return fn(rc, cx);
        } catch (const Error& e) {
            log << name << " failed: " << e.what() << "\n";
            return 3;
        }
    }
    return 2;
}

}  // namespace geowave::cli
