#include "geowave/go_probes.hpp"

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cstdio>
#include <numeric>

#include "geowave/io.hpp"

namespace geowave {

// ---- cutoff ----

Cutoff::Cutoff(double eps) : eps_(eps) {
    if (!(eps > 0.0)) throw InvalidArgument("cutoff width eps must be positive");
    auto sq = [this](double t) {
        double c = (*this)(t);
        return c * c;
    };
    l2sq_ = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(sq, 0.0, eps_, 15, 1e-14);
}

double Cutoff::operator()(double t) const {
    double s = t / eps_;
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return std::exp(4.0 - 1.0 / (s * (1.0 - s)));
}

double Cutoff::derivative(double t) const {
    double s = t / eps_;
    if (s <= 0.0 || s >= 1.0) return 0.0;
    double w = s * (1.0 - s);
    return std::exp(4.0 - 1.0 / w) * (1.0 - 2.0 * s) / (w * w) / eps_;
}

double Cutoff::l2_squared_trapezoid(int n) const {
    double dt = eps_ / n, sum = 0.0;
    for (int i = 1; i < n; ++i) {
        double c = (*this)(i * dt);
        sum += c * c;
    }
    return sum * dt;
}

// ---- fiber weights ----

FiberWeight uniform_weight() { return {[](double) { return 1.0; }, "uniform"}; }
FiberWeight zero_weight() { return {[](double) { return 0.0; }, "zero"}; }

FiberWeight sector_weight(double center, double half_width) {
    if (!(half_width > 0.0)) throw InvalidArgument("sector half width must be positive");
    auto f = [center, half_width](double beta) {
        double s = (beta - center) / half_width;
        if (std::abs(s) >= 1.0) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - s * s));
    };
    return {f, "sector(" + fmt17(center) + "," + fmt17(half_width) + ")"};
}

// ---- grid dispersion ----

GridDispersion::Index GridDispersion::index(const Sym2& ginv, Vec2 p, double omega) const {
    if (!active()) return {};
    // numerical frequency of the wave covector s * omega * p
    auto freq = [&](double s) {
        double k1 = s * omega * p.x, k2 = s * omega * p.y;
        double s1 = std::sin(0.5 * k1 * dx), s2 = std::sin(0.5 * k2 * dx);
        double sym = (4.0 * ginv.xx * s1 * s1 + 4.0 * ginv.yy * s2 * s2 +
                      2.0 * ginv.xy * std::sin(k1 * dx) * std::sin(k2 * dx)) /
                     (dx * dx);
        double arg = 0.5 * dt * std::sqrt(std::max(sym, 0.0));
        if (arg >= 1.0) throw GridTooCoarse("frequency " + fmt17(omega) + " is beyond the grid's temporal Nyquist limit");
        return 2.0 / dt * std::asin(arg);
    };
    double s = 1.0;
    const double ds = 1e-6;
    for (int it = 0; it < 50; ++it) {
        double f = freq(s) - omega;
        double d = (freq(s + ds) - freq(s - ds)) / (2.0 * ds);
        double step = f / d;
        s -= step;
        if (std::abs(step) < 1e-14) break;
    }
    double group = (freq(s + ds) - freq(s - ds)) / (2.0 * ds) / omega;
    return {s, 1.0 / group};
}

std::string GridDispersion::key() const {
    if (!active()) return "none";
    return "leapfrog(" + fmt17(dx) + "," + fmt17(dt) + ")";
}

GridDispersion grid_dispersion(const WaveGrid& grid) { return {grid.dx(), grid.dt()}; }

// ---- probe ----

namespace {

double simpson(const std::vector<double>& f, double dt) {
    std::size_t n = f.size() - 1;
    double s = f.front() + f.back();
    for (std::size_t i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f[i];
    return s * dt / 3.0;
}

int even_steps(double len, double step) {
    int n = std::max(2, int(std::ceil(len / step)));
    return n + (n % 2);
}

bool is_zero(const Field& f) { return f.describe() == zero_field().describe(); }

// chord parameters where the line y + tau xi meets the disk, or false
bool line_disk(Vec2 y, Vec2 xi, const Disk& d, double& t0, double& t1) {
    Vec2 r = y - d.center;
    double b = dot(r, xi), c = dot(r, r) - d.radius * d.radius, aa = dot(xi, xi);
    double disc = b * b - aa * c;
    if (disc <= 0.0) return false;
    double sq = std::sqrt(disc);
    t0 = (-b - sq) / aa;
    t1 = (-b + sq) / aa;
    return true;
}

}  // namespace

Probe::Probe(const Manifold& m, ProbeSpec spec) : m_(m), spec_(std::move(spec)), chi_(spec_.eps) {
    if (!(spec_.h > 0.0)) throw InvalidArgument("probe parameter h must be positive");
    if (spec_.h > spec_.h_max)
        throw InvalidArgument("probe parameter h = " + fmt17(spec_.h) + " exceeds the cap h0 = " + fmt17(spec_.h_max));
    if (spec_.sign != 1 && spec_.sign != -1) throw InvalidArgument("attenuation sign must be +1 or -1");
    if (!spec_.weight.f) throw InvalidArgument("fiber weight is empty");
    frame_ = m_.boundary_frame(m_.outer(), spec_.y_angle);
    step_ = spec_.ray_step > 0.0 ? spec_.ray_step : m_.default_step();
}

std::string Probe::key() const {
    return "probe(" + m_.describe() + ";y=" + fmt17(spec_.y_angle) + ";h=" + fmt17(spec_.h) +
           ";eps=" + fmt17(spec_.eps) + ";psi=" + spec_.weight.key + ";a=" + spec_.a.describe() +
           ";sign=" + std::to_string(spec_.sign) + ";disp=" + spec_.dispersion.key() + ";step=" + fmt17(step_) + ")";
}

double Probe::segment_integral(double beta, double t0, double t1) const {
    if (t1 <= t0 || is_zero(spec_.a)) return 0.0;
    const MetricField& g = m_.metric();
    Vec2 xi = frame_.direction(beta);
    int n = even_steps(t1 - t0, step_);
    double dt = (t1 - t0) / n;
    std::vector<double> f(n + 1);
    if (g.is_flat()) {
        for (int i = 0; i <= n; ++i) f[i] = spec_.a(frame_.y + (t0 + i * dt) * xi);
        return simpson(f, dt);
    }
    GeoState s{frame_.y, xi};
    if (t0 > 0.0) {
        int n0 = std::max(1, int(std::ceil(t0 / step_)));
        for (int i = 0; i < n0; ++i) s = rk4_step(g, s, t0 / n0, false);
    }
    f[0] = spec_.a(s.x);
    for (int i = 1; i <= n; ++i) {
        s = rk4_step(g, s, dt, false);
        f[i] = spec_.a(s.x);
    }
    return simpson(f, dt);
}

void Probe::ray_integrals(Local& p) const {
    const MetricField& g = m_.metric();
    const Disk& M = m_.inner();
    const double omega = 1.0 / spec_.h;
    Vec2 xi = frame_.direction(p.beta);
    bool disp = spec_.dispersion.active();
    if (g.is_flat()) {
        p.A = segment_integral(p.beta, 0.0, p.r);
        double t0, t1;
        if (disp && line_disk(frame_.y, xi, M, t0, t1)) {
            double len = std::max(0.0, std::min(p.r, t1) - std::max(t0, 0.0));
            auto ix = spec_.dispersion.index(g.eval(frame_.y).ginv, xi, omega);
            p.dphase = (ix.phase - 1.0) * len;
            p.dgroup = (ix.group - 1.0) * len;
        }
        return;
    }
    if (!disp) {
        p.A = segment_integral(p.beta, 0.0, p.r);
        return;
    }
    // one march collecting a, and the index inside M
    int n = even_steps(p.r, step_);
    double dt = p.r / n;
    std::vector<double> fa(n + 1), fp(n + 1), fg(n + 1), lev(n + 1);
    GeoState s{frame_.y, xi};
    for (int i = 0; i <= n; ++i) {
        if (i) s = rk4_step(g, s, dt, false);
        fa[i] = spec_.a(s.x);
        lev[i] = M.level(s.x);
        if (lev[i] < 0.0) {
            MetricSample ms = g.eval(s.x);
            auto ix = spec_.dispersion.index(ms.ginv, ms.g.apply(s.v), omega);
            fp[i] = ix.phase - 1.0;
            fg[i] = ix.group - 1.0;
        }
    }
    p.A = simpson(fa, dt);
    double dp = 0.0, dg = 0.0;
    for (int i = 0; i < n; ++i) {
        bool in0 = lev[i] < 0.0, in1 = lev[i + 1] < 0.0;
        if (in0 && in1) {
            dp += 0.5 * dt * (fp[i] + fp[i + 1]);
            dg += 0.5 * dt * (fg[i] + fg[i + 1]);
        } else if (in0 != in1) {
            int k = in0 ? i : i + 1;
            double frac = lev[k] / (lev[k] - lev[in0 ? i + 1 : i]);
            dp += frac * dt * fp[k];
            dg += frac * dt * fg[k];
        }
    }
    p.dphase = dp;
    p.dgroup = dg;
}

Probe::Local Probe::locate(Vec2 x) const {
    Local p;
    p.x = x;
    const MetricField& g = m_.metric();
    if (g.is_flat()) {
        Vec2 d = x - frame_.y;
        p.r = norm(d);
        if (p.r == 0.0) throw OutOfDomain("probe evaluated at its base point");
        p.beta = std::atan2(dot(d, frame_.e2), dot(d, frame_.e1));
        p.alpha = p.r * p.r;
    } else {
        PolarPoint pp = polar_coordinates(g, frame_, x, spec_.shoot);
        p.r = pp.r;
        p.beta = pp.beta;
        p.alpha = pp.alpha;
    }
    ray_integrals(p);
    return p;
}

std::vector<Probe::Local> Probe::locate(std::span<const Vec2> xs) const {
    std::vector<Local> out(xs.size());
    const MetricField& g = m_.metric();
    if (g.is_flat()) {
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = locate(xs[i]);
        return out;
    }
    // order by angle about the center of M so each shooting starts near the last
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    const Disk& M = m_.inner();
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return M.angle_of(xs[a]) < M.angle_of(xs[b]);
    });
    const std::size_t chunk = 64;
    const std::size_t nchunks = (xs.size() + chunk - 1) / chunk;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t c = 0; c < nchunks; ++c) {
        double r0 = 0.0, b0 = 0.0;
        bool seeded = false;
        for (std::size_t j = c * chunk; j < std::min(xs.size(), (c + 1) * chunk); ++j) {
            std::size_t i = order[j];
            Local p;
            p.x = xs[i];
            PolarPoint pp;
            if (seeded) {
                try {
                    pp = polar_coordinates(g, frame_, xs[i], spec_.shoot, r0, b0);
                } catch (const NonConvergence&) {
                    pp = polar_coordinates(g, frame_, xs[i], spec_.shoot);
                }
            } else {
                pp = polar_coordinates(g, frame_, xs[i], spec_.shoot);
            }
            p.r = pp.r;
            p.beta = pp.beta;
            p.alpha = pp.alpha;
            r0 = pp.r;
            b0 = pp.beta;
            seeded = true;
            ray_integrals(p);
            out[i] = p;
        }
    }
    return out;
}

double Probe::phase(Vec2 x, double t) const {
    const MetricField& g = m_.metric();
    double r = g.is_flat() ? norm(x - frame_.y) : distance(g, frame_.y, x, spec_.shoot).rho;
    return r - t;
}

double Probe::amplitude(const Local& p, double t) const {
    double c = chi_(t - p.r - p.dgroup);
    if (c == 0.0) return 0.0;
    return std::pow(p.alpha, -0.25) * c * spec_.weight(p.beta);
}

double Probe::amplitude(Vec2 x, double t) const { return amplitude(locate(x), t); }

double Probe::attenuation(Vec2 x, double t) const {
    if (is_zero(spec_.a)) return 1.0;
    Local p = locate(x);
    double I = segment_integral(p.beta, std::max(p.r - std::max(t, 0.0), 0.0), p.r);
    return std::exp(-0.5 * spec_.sign * I);
}

Complex Probe::ansatz(const Local& p, double t) const {
    double th = amplitude(p, t);
    if (th == 0.0) return 0.0;
    double psi = std::exp(-0.5 * spec_.sign * p.A);
    return th * psi * std::polar(1.0, (p.r + p.dphase - t) / spec_.h);
}

namespace {

class ProbeData final : public BoundaryData {
public:
    explicit ProbeData(std::shared_ptr<const Probe> p) : p_(std::move(p)) {}
    std::unique_ptr<BoundaryEval> bind(std::span<const Vec2> pts) const override {
        struct E final : BoundaryEval {
            std::shared_ptr<const Probe> p;
            std::vector<Probe::Local> loc;
            void eval(double t, std::span<Complex> out) const override {
                for (std::size_t i = 0; i < loc.size(); ++i) out[i] = p->ansatz(loc[i], t);
            }
        };
        auto e = std::make_unique<E>();
        e->p = p_;
        e->loc = p_->locate(pts);
        return e;
    }
    std::string key() const override { return p_->key(); }

private:
    std::shared_ptr<const Probe> p_;
};

}  // namespace

DataPtr Probe::boundary_data() const { return std::make_shared<ProbeData>(std::make_shared<Probe>(*this)); }

void check_resolution(const WaveGrid& grid, double h) {
    const Manifold& m = grid.manifold();
    const Disk& M = m.inner();
    const MetricField& g = m.metric();
    // largest g-length of a unit chart vector over M, sampled
    double scale = 0.0;
    for (int i = 0; i <= 8; ++i)
        for (int j = 0; j <= 8; ++j) {
            Vec2 x = M.center + M.radius * Vec2{-1.0 + 0.25 * i, -1.0 + 0.25 * j};
            if (M.level(x) > 0.0) continue;
            Sym2 s = g.eval(x).g;
            double tr = 0.5 * (s.xx + s.yy), d = std::sqrt(0.25 * (s.xx - s.yy) * (s.xx - s.yy) + s.xy * s.xy);
            scale = std::max(scale, std::sqrt(tr + d));
        }
    double speed = 0.0;
    for (int i = 0; i < 32; ++i) speed = std::max(speed, m.boundary_speed(M, 2.0 * pi * i / 32));
    const double need = 2.0 * pi * h / 8.0;
    double dx = grid.dx() * scale;
    double ds = speed * 2.0 * pi / grid.config().trace_points;
    if (dx > need || ds > need) {
        int cells = int(std::ceil(grid.config().cells * dx / need));
        int tp = int(std::ceil(grid.config().trace_points * ds / need));
        throw GridTooCoarse("h = " + fmt17(h) + " needs 8 points per wavelength 2 pi h: cells >= " +
                            std::to_string(std::max(cells, grid.config().cells)) + " and trace_points >= " +
                            std::to_string(std::max(tp, grid.config().trace_points)));
    }
}

ProbeTraces probe_traces(const Manifold& m, const ProbeSpec& spec, const WaveGrid& grid) {
    check_resolution(grid, spec.h);
    ProbeSpec fs = spec;
    fs.weight = uniform_weight();
    fs.sign = +1;
    ProbeSpec gs = spec;
    gs.a = zero_field();
    gs.sign = +1;
    ProbeTraces out;
    out.f = Probe(m, fs).boundary_data();
    out.g = Probe(m, gs).boundary_data();
    const auto& pts = grid.trace_points();
    std::vector<Complex> v(pts.size());
    out.f->bind(pts)->eval(0.0, v);
    for (Complex z : v)
        if (std::abs(z) > 0.0) out.vanishes_at_zero = false;
    return out;
}

// ---- residuals ----

namespace {

// values on the 3x3 stencil x + (i-1, j-1) fd, index i + 3 j
struct Stencil {
    double v[9];
    double dx() const { return v[5] - v[3]; }
    double dy() const { return v[7] - v[1]; }
};

// g^{ij} d_ij rho + b^j d_j rho with b^j = |g|^{-1/2} d_i(|g|^{1/2} g^{ij})
double laplacian(const MetricField& g, Vec2 x, const Stencil& r, double fd) {
    MetricSample s = g.eval(x);
    double rxx = (r.v[5] - 2 * r.v[4] + r.v[3]) / (fd * fd);
    double ryy = (r.v[7] - 2 * r.v[4] + r.v[1]) / (fd * fd);
    double rxy = (r.v[8] - r.v[6] - r.v[2] + r.v[0]) / (4 * fd * fd);
    auto flux = [&](Vec2 p) {
        MetricSample m = g.eval(p);
        return m.sqrt_det * m.ginv;
    };
    Sym2 fxp = flux(x + Vec2{fd, 0}), fxm = flux(x - Vec2{fd, 0});
    Sym2 fyp = flux(x + Vec2{0, fd}), fym = flux(x - Vec2{0, fd});
    double b1 = ((fxp.xx - fxm.xx) + (fyp.xy - fym.xy)) / (2 * fd) / s.sqrt_det;
    double b2 = ((fxp.xy - fxm.xy) + (fyp.yy - fym.yy)) / (2 * fd) / s.sqrt_det;
    double rx = r.dx() / (2 * fd), ry = r.dy() / (2 * fd);
    return s.ginv.xx * rxx + 2 * s.ginv.xy * rxy + s.ginv.yy * ryy + b1 * rx + b2 * ry;
}

std::array<Vec2, 9> stencil_points(Vec2 x, double fd) {
    std::array<Vec2, 9> p;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) p[i + 3 * j] = x + Vec2{(i - 1) * fd, (j - 1) * fd};
    return p;
}

}  // namespace

double transport_residual(const Probe& p, std::span<const Vec2> samples, double t, double fd) {
    const MetricField& g = p.manifold().metric();
    double worst = 0.0;
    for (Vec2 x : samples) {
        auto pts = stencil_points(x, fd);
        auto loc = p.locate(pts);
        Stencil r, th;
        for (int k = 0; k < 9; ++k) {
            r.v[k] = loc[k].r;
            th.v[k] = p.amplitude(loc[k], t);
        }
        double tht = (p.amplitude(loc[4], t + fd) - p.amplitude(loc[4], t - fd)) / (2 * fd);
        Sym2 gi = g.eval(x).ginv;
        Vec2 dr{r.dx() / (2 * fd), r.dy() / (2 * fd)}, dth{th.dx() / (2 * fd), th.dy() / (2 * fd)};
        double res = tht + gi.quad(dr, dth) + 0.5 * laplacian(g, x, r, fd) * th.v[4];
        worst = std::max(worst, std::abs(res));
    }
    return worst;
}

double attenuation_residual(const Probe& p, std::span<const Vec2> samples, double t, double fd) {
    const MetricField& g = p.manifold().metric();
    double worst = 0.0;
    for (Vec2 x : samples) {
        auto pts = stencil_points(x, fd);
        Stencil r, ps;
        for (int k : {1, 3, 4, 5, 7}) {
            r.v[k] = p.locate(pts[k]).r;
            ps.v[k] = p.attenuation(pts[k], t);
        }
        double pst = (p.attenuation(x, t + fd) - p.attenuation(x, t - fd)) / (2 * fd);
        Sym2 gi = g.eval(x).ginv;
        Vec2 dr{r.dx() / (2 * fd), r.dy() / (2 * fd)}, dps{ps.dx() / (2 * fd), ps.dy() / (2 * fd)};
        double res = pst + gi.quad(dr, dps) + 0.5 * p.spec().sign * p.spec().a(x) * ps.v[4];
        worst = std::max(worst, std::abs(res));
    }
    return worst;
}

// ---- remainder ----

RemainderReport remainder_norm(const Manifold& m, const ProbeSpec& spec, const Coefficients& c,
                               const RemainderOptions& opt) {
    if (opt.hs.empty()) throw InvalidArgument("remainder sweep needs at least one h");
    if (opt.samples < 1) throw InvalidArgument("remainder sweep needs at least one sample time");
    RemainderReport rep;
    const double rmin = 0.5 * (m.outer().radius - m.inner().radius);
    for (double h : opt.hs) {
        ProbeSpec ps = spec;
        ps.h = h;
        ps.dispersion = {};
        Probe probe(m, ps);
        auto coarse = make_wave_grid(m, opt.wave);
        check_resolution(*coarse, h);
        std::vector<int> nodes;
        std::vector<Vec2> xs;
        for (int k : coarse->interior()) {
            Vec2 x = coarse->node(k);
            nodes.push_back(k);
            xs.push_back(x);
        }
        auto loc = probe.locate(xs);
        std::vector<int> obs;
        for (int j = 1; j <= opt.samples; ++j)
            obs.push_back(int(std::lround(double(coarse->steps()) * j / opt.samples)));
        std::vector<cvec> uc(obs.size());
        SolveOptions so;
        so.want_trace = false;
        so.observer = [&](int n, const cvec& u) {
            auto it = std::find(obs.begin(), obs.end(), n);
            if (it == obs.end()) return;
            cvec& dst = uc[it - obs.begin()];
            dst.resize(nodes.size());
            for (std::size_t i = 0; i < nodes.size(); ++i) dst[i] = u[nodes[i]];
        };
        DataPtr f = probe.boundary_data();
        solve_ibvp(coarse, c, f, so);
        std::vector<char> use(nodes.size(), 1);
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (loc[i].r < rmin) use[i] = 0;
        if (opt.richardson) {
            WaveConfig fc = opt.wave;
            fc.cells = 2 * opt.wave.cells;
            fc.steps = 2 * coarse->steps();
            fc.trace_stride = 2 * opt.wave.trace_stride;
            auto fine = make_wave_grid(m, fc);
            const int nxc = coarse->nx(), nxf = fine->nx();
            std::vector<int> fnode(nodes.size());
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                int ic = nodes[i] % nxc, jc = nodes[i] / nxc;
                fnode[i] = (2 * ic - 4) + (2 * jc - 4) * nxf;
                if (!fine->is_interior(fnode[i])) use[i] = 0;
            }
            SolveOptions fo = so;
            fo.observer = [&](int n, const cvec& u) {
                if (n % 2) return;
                auto it = std::find(obs.begin(), obs.end(), n / 2);
                if (it == obs.end()) return;
                cvec& dst = uc[it - obs.begin()];
                for (std::size_t i = 0; i < nodes.size(); ++i)
                    if (use[i]) dst[i] = (4.0 * u[fnode[i]] - dst[i]) / 3.0;
            };
            solve_ibvp(fine, c, f, fo);
        }
        double worst = 0.0, scale = 0.0;
        for (std::size_t j = 0; j < obs.size(); ++j) {
            double t = obs[j] * coarse->dt();
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (!use[i]) continue;
                Complex w = probe.ansatz(loc[i], t);
                double v = coarse->volume(nodes[i]);
                num += v * std::norm(uc[j][i] - w);
                den += v * std::norm(w);
            }
            worst = std::max(worst, std::sqrt(num));
            scale = std::max(scale, std::sqrt(den));
        }
        rep.hs.push_back(h);
        rep.norms.push_back(worst);
        rep.ansatz_norms.push_back(scale);
    }
    for (std::size_t k = 1; k < rep.norms.size(); ++k) rep.ratios.push_back(rep.norms[k] / rep.norms[k - 1]);
    if (rep.hs.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = double(rep.hs.size());
        for (std::size_t k = 0; k < rep.hs.size(); ++k) {
            double lx = std::log(rep.hs[k]), ly = std::log(std::max(rep.norms[k], 1e-300));
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return rep;
}

}  // namespace geowave
