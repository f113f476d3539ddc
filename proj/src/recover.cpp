#include "geowave/recover.hpp"

#include <algorithm>
#include <optional>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "geowave/io.hpp"

namespace geowave {

// ---- kernel ----

double MollifierKernel::operator()(double xi) const {
    double d = 1.0 + kappa * kappa - 2.0 * kappa * std::cos(xi - theta);
    return (1.0 - kappa * kappa) / (alpha_n * std::pow(d, 0.5 * n));
}

double MollifierKernel::bound() const { return 2.0 / (alpha_n * std::pow(1.0 - kappa, n - 1)); }

MollifierKernel make_kernel(double theta, double kappa) {
    if (!(kappa > 0.0 && kappa < 1.0))
        throw InvalidArgument("kernel concentration kappa = " + fmt17(kappa) + " is outside (0, 1)");
    return {theta, kappa, 2, 2.0 * pi};
}

double poisson_eval(const MollifierKernel& k, double xi) { return k(xi); }

FiberWeight kernel_weight(const MollifierKernel& k) {
    return {[k](double b) { return k(b); }, "poisson(" + fmt17(k.theta) + "," + fmt17(k.kappa) + ")"};
}

namespace {

// integral over the fiber circle split at theta, where the kernel peaks
template <class F>
double fiber_integral(F f, double theta) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    return GK::integrate(f, theta - pi, theta, 20, 1e-12) + GK::integrate(f, theta, theta + pi, 20, 1e-12);
}

double chord(double a, double b) { return 2.0 * std::abs(std::sin(0.5 * (a - b))); }

}  // namespace

double kernel_mass(const MollifierKernel& k) {
    return fiber_integral([&](double x) { return k(x); }, k.theta);
}

double kernel_moment(const MollifierKernel& k) {
    return fiber_integral([&](double x) { return k(x) * chord(x, k.theta); }, k.theta);
}

double kernel_h2_norm(const MollifierKernel& k, int m) {
    const double d = 2.0 * pi / m;
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) v[i] = k(k.theta - pi + i * d);
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
        double a = v[(i + m - 1) % m], b = v[i], c = v[(i + 1) % m];
        double d1 = (c - a) / (2 * d), d2 = (c - 2 * b + a) / (d * d);
        s += (b * b + d1 * d1 + d2 * d2) * d;
    }
    return s;
}

PoissonReport poisson_checks(const std::vector<double>& kappas, int grid) {
    PoissonReport r;
    double cmin = 1e300;
    for (double kappa : kappas) {
        MollifierKernel k = make_kernel(0.3, kappa);
        double err = std::abs(kernel_mass(k) - 1.0);
        double worst = 0.0;
        for (int i = 0; i < grid; ++i) {
            MollifierKernel ki = make_kernel(2.0 * pi * i / grid, kappa);
            for (int j = 0; j < grid; ++j) {
                double v = ki(2.0 * pi * (j + 0.5) / grid);
                if (v < 0.0) r.bound_ok = false;
                worst = std::max(worst, v / ki.bound());
            }
            // the peak itself
            worst = std::max(worst, ki(ki.theta) / ki.bound());
        }
        if (worst > 1.0) r.bound_ok = false;
        double mom = kernel_moment(k);
        double cm = mom / std::pow(1.0 - kappa, 1.0 / (2.0 * k.n));
        double h2 = kernel_h2_norm(k);
        r.kappas.push_back(kappa);
        r.mass_errors.push_back(err);
        r.max_over_bound.push_back(worst);
        r.moments.push_back(mom);
        r.moment_constants.push_back(cm);
        r.h2_norms.push_back(h2);
        r.h2_constants.push_back(h2 * std::pow(1.0 - kappa, k.n + 3));
        r.max_mass_error = std::max(r.max_mass_error, err);
        r.moment_constant = std::max(r.moment_constant, cm);
        cmin = std::min(cmin, cm);
    }
    if (!kappas.empty()) r.moment_spread = r.moment_constant / cmin - 1.0;
    return r;
}

double kappa_rule(double h, int n) {
    if (!(h > 0.0 && h < 1.0)) throw InvalidArgument("kappa rule needs h in (0, 1), got " + fmt17(h));
    if (n < 1) throw InvalidArgument("dimension must be positive");
    double e = 2.0 * n / (1.0 + 2.0 * n * n + 6.0 * n);
    return 1.0 - std::pow(h, e);
}

// ---- pairings ----

PairingEngine::PairingEngine(std::shared_ptr<const DtnOperator> known, std::shared_ptr<const DtnOperator> unknown,
                             ProbeSpec base, bool compensate_dispersion)
    : known_(std::move(known)), unknown_(std::move(unknown)), base_(std::move(base)) {
    if (!known_ || !unknown_) throw InvalidArgument("pairing needs two operators");
    const WaveGrid& g = *known_->grid();
    if (g.describe() != unknown_->grid()->describe()) throw InvalidArgument("operators live on different grids");
    check_resolution(g, base_.h);
    check_horizon(g.manifold(), g.config().T, base_.eps);
    base_.weight = uniform_weight();
    base_.sign = +1;
    base_.dispersion = compensate_dispersion ? grid_dispersion(g) : GridDispersion{};
    chi_l2_ = Cutoff(base_.eps).l2_squared();
}

ProbeSpec PairingEngine::spec_at(double y_angle) const {
    ProbeSpec s = base_;
    s.y_angle = y_angle;
    s.a = known_->coefficients().a;
    return s;
}

DataPtr PairingEngine::forward_probe(double y_angle) const {
    return Probe(known_->grid()->manifold(), spec_at(y_angle)).boundary_data();
}

const PairingEngine::Profile& PairingEngine::profile(double y_angle) const {
    {
        std::lock_guard lk(mu_);
        auto it = cache_.find(y_angle);
        if (it != cache_.end()) return *it->second;
    }
    auto p = std::make_shared<Profile>();
    DataPtr f = forward_probe(y_angle);
    const BoundarySignal kf = known_->apply(f);
    p->diff = known_.get() == unknown_.get() ? signal_difference(kf, kf) : signal_difference(kf, unknown_->apply(f));
    const WaveGrid& g = *known_->grid();
    ProbeSpec gs = spec_at(y_angle);
    gs.a = zero_field();
    Probe gp(g.manifold(), gs);
    auto loc = gp.locate(g.trace_points());
    const BoundarySignal& d = p->diff;
    const std::size_t np = d.npoints(), nt = d.ntimes();
    p->beta.resize(np);
    p->c.assign(np, Complex{});
    const double dtt = nt > 1 ? d.times[1] - d.times[0] : 0.0;
    for (std::size_t ip = 0; ip < np; ++ip) {
        p->beta[ip] = loc[ip].beta;
        Complex s{};
        for (std::size_t it = 0; it < nt; ++it) {
            Complex v = d.at(it, ip);
            if (v == Complex{}) continue;
            s += (it == 0 || it == nt - 1 ? 0.5 : 1.0) * dtt * std::conj(gp.ansatz(loc[ip], d.times[it])) * v;
        }
        p->c[ip] = d.dsigma[ip] * s;
    }
    std::lock_guard lk(mu_);
    auto [it, fresh] = cache_.emplace(y_angle, p);
    return *it->second;
}

const BoundarySignal& PairingEngine::difference(double y_angle) const { return profile(y_angle).diff; }

PairingRecord PairingEngine::pair(double y_angle, const FiberWeight& w) const {
    const Profile& p = profile(y_angle);
    Complex v{};
    for (std::size_t ip = 0; ip < p.c.size(); ++ip) {
        if (p.c[ip] == Complex{}) continue;
        double wt = w(p.beta[ip]);
        if (wt != 0.0) v += wt * p.c[ip];
    }
    return {y_angle, base_.h, w.key, v, chi_l2_};
}

PairingRecord boundary_pairing(const DtnOperator& known, const DtnOperator& unknown, const ProbeTraces& traces,
                               double y_angle, double h, double eps) {
    BoundarySignal d = signal_difference(known.apply(traces.f), unknown.apply(traces.f));
    BoundarySignal g = sample_data(*known.grid(), traces.g);
    return {y_angle, h, traces.g->key(), signal_pairing(g, d), Cutoff(eps).l2_squared()};
}

namespace {

double weight_mass(const FiberWeight& w) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    return GK::integrate([&](double b) { return std::abs(w(b)); }, -0.5 * pi, 0.5 * pi, 20, 1e-10);
}

}  // namespace

Estimate extract_weighted_exp(const PairingEngine& e, double y_angle, const FiberWeight& w,
                              double remainder_constant) {
    PairingRecord r = e.pair(y_angle, w);
    Complex s = Complex(0.0, 0.5) * e.h() * r.value / r.chi_l2;
    return {s, remainder_constant * e.h() * weight_mass(w)};
}

Estimate extract_weighted_ray_q(const PairingEngine& e, double y_angle, const FiberWeight& w, double a_hat_max,
                                double remainder_constant) {
    PairingRecord r = e.pair(y_angle, w);
    double h = e.h();
    return {-r.value / r.chi_l2, remainder_constant * (h + a_hat_max / h) * weight_mass(w)};
}

PointwiseValue pointwise_ray_absorption(const PairingEngine& e, double y_angle, double theta, double kappa,
                                        double remainder_constant) {
    MollifierKernel k = make_kernel(theta, kappa);
    Estimate s = extract_weighted_exp(e, y_angle, kernel_weight(k), remainder_constant);
    double arg = 1.0 + s.value.real();
    if (!(arg > 0.0))
        throw ExtractionOutOfRange("1 + Re S = " + fmt17(arg) + " at y = " + fmt17(y_angle) + ", theta = " +
                                   fmt17(theta) + ": noise dominates the signal at h = " + fmt17(e.h()));
    return {-2.0 * std::log(arg), s.value, s.error_bar, kernel_moment(k)};
}

// ---- reconstruction ----

FiberMixing kernel_mixing(const FanGrid& fan, double kappa) {
    const int nb = fan.nb();
    std::vector<double> w(std::size_t(nb) * nb);
    for (int j = 0; j < nb; ++j) {
        MollifierKernel k = make_kernel(fan.beta(j), kappa);
        for (int i = 0; i < nb; ++i) w[std::size_t(j) * nb + i] = k(fan.beta(i)) * fan.dbeta();
    }
    return FiberMixing(nb, std::move(w));
}

namespace {

double effective_kappa(const RecoverOptions& opt) { return opt.kappa > 0.0 ? opt.kappa : kappa_rule(opt.h); }

void finish_stage(StageResult& st, const FanPtr& fan, const RecoverOptions& opt, const char* what) {
    const std::size_t total = fan->size();
    if (st.failures > opt.max_failure_fraction * double(total))
        throw ExtractionOutOfRange(std::string(what) + ": " + std::to_string(st.failures) + " of " +
                                   std::to_string(total) + " fan nodes failed (allowed fraction " +
                                   fmt17(opt.max_failure_fraction) + ")");
    InvertOptions inv = opt.invert;
    inv.exec = opt.exec;
    std::optional<FiberMixing> w;
    if (opt.deblur) {
        w.emplace(kernel_mixing(*fan, st.kappa));
        inv.mixing = &*w;
    }
    st.inversion = invert(st.image, inv);
}

StageResult empty_stage(const FanPtr& fan, const RecoverOptions& opt) {
    StageResult st;
    st.h = opt.h;
    st.kappa = effective_kappa(opt);
    st.image.grid = fan;
    st.image.values.assign(fan->size(), 0.0);
    st.raw.assign(fan->size(), Complex{});
    st.error_bar.assign(fan->size(), 0.0);
    st.blur.assign(fan->size(), 0.0);
    st.failed.assign(fan->size(), 0);
    return st;
}

}  // namespace

StageResult recover_absorption(const PairingEngine& e, const FanPtr& fan, const RecoverOptions& opt) {
    StageResult st = empty_stage(fan, opt);
    if (std::abs(e.h() - opt.h) > 1e-15) throw InvalidArgument("engine and options disagree on h");
    const int nb = fan->nb();
    for (int is = 0; is < fan->ns(); ++is)
        for (int ib = 0; ib < nb; ++ib) {
            std::size_t k = std::size_t(is) * nb + ib;
            MollifierKernel ker = make_kernel(fan->beta(ib), st.kappa);
            Estimate s = extract_weighted_exp(e, fan->angle(is), kernel_weight(ker), opt.remainder_constant);
            st.raw[k] = s.value;
            st.error_bar[k] = s.error_bar;
            st.blur[k] = kernel_moment(ker);
            double arg = 1.0 + s.value.real();
            if (arg > 0.0) {
                st.image.values[k] = -2.0 * std::log(arg);
            } else {
                st.failed[k] = 1;
                ++st.failures;
            }
        }
    finish_stage(st, fan, opt, "absorption stage");
    return st;
}

StageResult recover_potential(const PairingEngine& e, const FanPtr& fan, const RecoverOptions& opt,
                              double a_hat_max) {
    StageResult st = empty_stage(fan, opt);
    if (std::abs(e.h() - opt.h) > 1e-15) throw InvalidArgument("engine and options disagree on h");
    const int nb = fan->nb();
    for (int is = 0; is < fan->ns(); ++is)
        for (int ib = 0; ib < nb; ++ib) {
            std::size_t k = std::size_t(is) * nb + ib;
            MollifierKernel ker = make_kernel(fan->beta(ib), st.kappa);
            Estimate q = extract_weighted_ray_q(e, fan->angle(is), kernel_weight(ker), a_hat_max,
                                                opt.remainder_constant);
            st.raw[k] = q.value;
            st.error_bar[k] = q.error_bar;
            st.blur[k] = kernel_moment(ker);
            st.image.values[k] = q.value.real();
        }
    finish_stage(st, fan, opt, "potential stage");
    return st;
}

namespace {

// I(f)(y, beta_q) on nq midpoints of (-pi/2, pi/2) for every fan base point
std::vector<double> fiber_transforms(const Manifold& m, const Field& f, const FanGrid& fan, int nq, Exec exec) {
    std::vector<double> out(std::size_t(fan.ns()) * nq);
    const double db = pi / nq;
    auto one = [&](std::ptrdiff_t k) {
        int is = int(k / nq), iq = int(k % nq);
        FiberFrame fr = m.boundary_frame(fan.boundary(), fan.angle(is));
        double b = -0.5 * pi + (iq + 0.5) * db;
        out[k] = ray_integral(m.metric(), {fr.y, fr.direction(b)}, f, fan.boundary(), fan.step());
    };
    const std::ptrdiff_t total = std::ptrdiff_t(out.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::ptrdiff_t k = 0; k < total; ++k) one(k);
    } else {
        for (std::ptrdiff_t k = 0; k < total; ++k) one(k);
    }
    return out;
}

}  // namespace

StageResult bypass_absorption(const Manifold& m, const Field& a, const FanPtr& fan, const RecoverOptions& opt) {
    StageResult st = empty_stage(fan, opt);
    const int nq = opt.fiber_quadrature, nb = fan->nb();
    const double db = pi / nq;
    auto I = fiber_transforms(m, a, *fan, nq, opt.exec);
    for (int is = 0; is < fan->ns(); ++is)
        for (int ib = 0; ib < nb; ++ib) {
            std::size_t k = std::size_t(is) * nb + ib;
            MollifierKernel ker = make_kernel(fan->beta(ib), st.kappa);
            double s = 0.0;
            for (int iq = 0; iq < nq; ++iq)
                s += ker(-0.5 * pi + (iq + 0.5) * db) * (std::exp(-0.5 * I[std::size_t(is) * nq + iq]) - 1.0) * db;
            st.raw[k] = s;
            st.blur[k] = kernel_moment(ker);
            if (1.0 + s > 0.0) {
                st.image.values[k] = -2.0 * std::log(1.0 + s);
            } else {
                st.failed[k] = 1;
                ++st.failures;
            }
        }
    finish_stage(st, fan, opt, "absorption stage (bypass)");
    return st;
}

StageResult bypass_potential(const Manifold& m, const Field& q, const FanPtr& fan, const RecoverOptions& opt) {
    StageResult st = empty_stage(fan, opt);
    const int nq = opt.fiber_quadrature, nb = fan->nb();
    const double db = pi / nq;
    auto I = fiber_transforms(m, q, *fan, nq, opt.exec);
    for (int is = 0; is < fan->ns(); ++is)
        for (int ib = 0; ib < nb; ++ib) {
            std::size_t k = std::size_t(is) * nb + ib;
            MollifierKernel ker = make_kernel(fan->beta(ib), st.kappa);
            double s = 0.0;
            for (int iq = 0; iq < nq; ++iq) s += ker(-0.5 * pi + (iq + 0.5) * db) * I[std::size_t(is) * nq + iq] * db;
            st.raw[k] = s;
            st.blur[k] = kernel_moment(ker);
            st.image.values[k] = s;
        }
    finish_stage(st, fan, opt, "potential stage (bypass)");
    return st;
}

BlurCheck bypass_blur_check(const Manifold& m, const Field& a, const StageResult& st, const RecoverOptions& opt) {
    const FanGrid& fan = *st.image.grid;
    const int nq = opt.fiber_quadrature, nb = fan.nb();
    const double db = pi / nq;
    auto I = fiber_transforms(m, a, fan, nq, opt.exec);
    BlurCheck out;
    out.worst_excess = -1e300;
    for (int is = 0; is < fan.ns(); ++is) {
        // chord-Lipschitz constant of E = exp(-I/2) - 1, zero on the outward half fiber
        double L = 0.0;
        auto E = [&](int iq) { return std::exp(-0.5 * I[std::size_t(is) * nq + iq]) - 1.0; };
        for (int iq = 0; iq + 1 < nq; ++iq) L = std::max(L, std::abs(E(iq + 1) - E(iq)) / chord(0.0, db));
        L = std::max(L, std::abs(E(0)) / chord(0.0, 0.5 * db));
        L = std::max(L, std::abs(E(nq - 1)) / chord(0.0, 0.5 * db));
        for (int ib = 0; ib < nb; ++ib) {
            std::size_t k = std::size_t(is) * nb + ib;
            const BoundaryRay& r = fan.ray(is, ib);
            double exact = ray_integral(m.metric(), {r.y, r.xi}, a, fan.boundary(), fan.step());
            double lo = std::min(1.0 + st.raw[k].real(), std::exp(-0.5 * exact));
            double bound = 2.0 * L * st.blur[k] / lo;
            out.exact.push_back(exact);
            out.bound.push_back(bound);
            out.worst_excess = std::max(out.worst_excess, std::abs(st.image.values[k] - exact) - bound);
        }
    }
    return out;
}

namespace {

double grid_max(const InversionResult& r) {
    double m = 0.0;
    if (r.pixels)
        for (double v : r.pixels->values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

ReconstructionResult recover(const PairingEngine& absorption_engine, const PairingEngine& potential_engine,
                             const FanPtr& fan, const RecoverOptions& opt) {
    ReconstructionResult r;
    r.absorption = recover_absorption(absorption_engine, fan, opt);
    r.a_hat = r.absorption.inversion.field;
    r.potential = recover_potential(potential_engine, fan, opt, grid_max(r.absorption.inversion));
    r.q_hat = r.potential.inversion.field;
    r.schedule = {{"h", fmt17(opt.h)},
                  {"kappa", fmt17(r.absorption.kappa)},
                  {"eps", fmt17(opt.eps)},
                  {"ns", std::to_string(opt.ns)},
                  {"nb", std::to_string(opt.nb)},
                  {"compensate_dispersion", opt.compensate_dispersion ? "1" : "0"},
                  {"deblur", opt.deblur ? "1" : "0"},
                  {"a_hat_max", fmt17(grid_max(r.absorption.inversion))}};
    return r;
}

double trace_stencil_error(double kd) {
    Complex e1 = std::exp(Complex(0.0, -kd)), e2 = e1 * e1;
    Complex est = (7.0 - 8.0 * e1 + e2 - 2.0 * kd * kd) / 6.0;
    return std::abs(est / Complex(0.0, kd) - 1.0);
}

HChoice select_h(const std::vector<double>& hs, const WaveGrid& grid, double remainder_constant,
                 double blur_constant) {
    HChoice c;
    double d = 0.0;
    for (std::size_t ip = 0; ip < grid.trace_points().size(); ++ip) d = std::max(d, grid.trace_spacing(int(ip)));
    double best = 1e300;
    for (double h : hs) {
        try {
            check_resolution(grid, h);
        } catch (const GridTooCoarse& e) {
            c.refused.push_back(e.what());
            continue;
        }
        double bar = remainder_constant * h + trace_stencil_error(d / h);
        if (blur_constant > 0.0) bar += blur_constant * kernel_moment(make_kernel(0.0, kappa_rule(h)));
        c.hs.push_back(h);
        c.bars.push_back(bar);
        if (bar < best) {
            best = bar;
            c.h = h;
        }
    }
    if (c.hs.empty()) throw GridTooCoarse("no h in the sweep is resolved by the grid");
    return c;
}

HolderFit holder_fit(const std::vector<double>& gaps, const std::vector<double>& perturbations) {
    if (gaps.size() != perturbations.size()) throw InvalidArgument("gap and perturbation counts differ");
    if (gaps.size() < 4) throw InvalidArgument("Hoelder fit needs at least 4 perturbation amplitudes");
    for (std::size_t k = 0; k < gaps.size(); ++k)
        if (!(gaps[k] > 0.0) || !(perturbations[k] > 0.0))
            throw InvalidArgument("Hoelder fit needs positive gaps and perturbations (zero perturbation excluded)");
    auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
    if (*hi - *lo <= 1e-12 * *hi) throw InvalidArgument("degenerate sweep: all gap norms are equal");
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = double(gaps.size());
    for (std::size_t k = 0; k < gaps.size(); ++k) {
        double x = std::log(gaps[k]), y = std::log(perturbations[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    HolderFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

void write_field_csv(const InversionResult& r, const std::filesystem::path& p) {
    if (!r.pixels) throw InvalidArgument("no pixel field to write");
    CsvWriter w(p, {"x", "y", "value"});
    const PixelField& f = *r.pixels;
    for (int j = 0; j < f.n(); ++j)
        for (int i = 0; i < f.n(); ++i) {
            Vec2 x = f.node(i, j);
            w.row({x.x, x.y, f.values()[std::size_t(j) * f.n() + i]});
        }
}

void write_stage_csv(const StageResult& st, const std::filesystem::path& p) {
    CsvWriter w(p, {"angle", "beta", "value", "re", "im", "error_bar", "blur", "failed"});
    const FanGrid& fan = *st.image.grid;
    for (int is = 0; is < fan.ns(); ++is)
        for (int ib = 0; ib < fan.nb(); ++ib) {
            std::size_t k = std::size_t(is) * fan.nb() + ib;
            w.row({fan.angle(is), fan.beta(ib), st.image.values[k], st.raw[k].real(), st.raw[k].imag(),
                   st.error_bar[k], st.blur[k], double(st.failed[k])});
        }
}

}  // namespace geowave
