#include "geowave/wavesim.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>

#include "geowave/io.hpp"

namespace geowave {

std::string WaveConfig::describe() const {
    char buf[192];
    std::snprintf(buf, sizeof buf, "wave(cells=%d,cfl=%.17g,T=%.17g,trace=%d,stride=%d,order=%d,pde=%d,steps=%d)", cells,
                  cfl, T, trace_points, trace_stride, trace_order, int(trace_pde), steps);
    return buf;
}

// ---- boundary data ----

namespace {

class Analytic final : public BoundaryData {
public:
    Analytic(std::string key, std::function<Complex(Vec2, double)> f) : key_(std::move(key)), f_(std::move(f)) {}
    std::unique_ptr<BoundaryEval> bind(std::span<const Vec2> pts) const override {
        struct E final : BoundaryEval {
            std::vector<Vec2> p;
            const std::function<Complex(Vec2, double)>* f;
            void eval(double t, std::span<Complex> out) const override {
                for (std::size_t i = 0; i < p.size(); ++i) out[i] = (*f)(p[i], t);
            }
        };
        auto e = std::make_unique<E>();
        e->p.assign(pts.begin(), pts.end());
        e->f = &f_;
        return e;
    }
    std::string key() const override { return key_; }

private:
    std::string key_;
    std::function<Complex(Vec2, double)> f_;
};

class Combined final : public BoundaryData {
public:
    Combined(DataPtr a, Complex ca, DataPtr b, Complex cb) : a_(std::move(a)), b_(std::move(b)), ca_(ca), cb_(cb) {}
    std::unique_ptr<BoundaryEval> bind(std::span<const Vec2> pts) const override {
        struct E final : BoundaryEval {
            std::unique_ptr<BoundaryEval> a, b;
            Complex ca, cb;
            mutable std::vector<Complex> tmp;
            void eval(double t, std::span<Complex> out) const override {
                tmp.resize(out.size());
                a->eval(t, out);
                b->eval(t, tmp);
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = ca * out[i] + cb * tmp[i];
            }
        };
        auto e = std::make_unique<E>();
        e->a = a_->bind(pts);
        e->b = b_->bind(pts);
        e->ca = ca_;
        e->cb = cb_;
        return e;
    }
    std::string key() const override {
        return "combine(" + a_->key() + "," + fmt17(ca_.real()) + "," + fmt17(ca_.imag()) + "," + b_->key() + "," +
               fmt17(cb_.real()) + "," + fmt17(cb_.imag()) + ")";
    }

private:
    DataPtr a_, b_;
    Complex ca_, cb_;
};

class Reversed final : public BoundaryData {
public:
    Reversed(DataPtr f, double T) : f_(std::move(f)), T_(T) {}
    std::unique_ptr<BoundaryEval> bind(std::span<const Vec2> pts) const override {
        struct E final : BoundaryEval {
            std::unique_ptr<BoundaryEval> f;
            double T;
            void eval(double t, std::span<Complex> out) const override { f->eval(T - t, out); }
        };
        auto e = std::make_unique<E>();
        e->f = f_->bind(pts);
        e->T = T_;
        return e;
    }
    std::string key() const override { return "reversed(" + f_->key() + "," + fmt17(T_) + ")"; }

private:
    DataPtr f_;
    double T_;
};

// Signal on the trace grid, linear in the boundary angle and cubic in time.
class Sampled final : public BoundaryData {
public:
    Sampled(BoundarySignal s, Vec2 center) : s_(std::move(s)), c_(center) {
        std::string bytes(reinterpret_cast<const char*>(s_.values.data()), s_.values.size() * sizeof(Complex));
        key_ = "sampled(" + content_hash(bytes) + ")";
    }
    std::unique_ptr<BoundaryEval> bind(std::span<const Vec2> pts) const override {
        struct E final : BoundaryEval {
            const BoundarySignal* s;
            std::vector<int> i0;
            std::vector<double> w;
            void eval(double t, std::span<Complex> out) const override {
                const auto& tm = s->times;
                const int nt = int(tm.size());
                double dtt = tm[1] - tm[0];
                double ft = t / dtt;
                if (ft < 0.0 || ft > nt - 1) {
                    std::fill(out.begin(), out.end(), Complex{});
                    return;
                }
                int j = std::clamp(int(std::floor(ft)), 1, nt - 3);
                double u = ft - j;
                const double lw[4] = {-u * (u - 1) * (u - 2) / 6, (u + 1) * (u - 1) * (u - 2) / 2,
                                      -(u + 1) * u * (u - 2) / 2, (u + 1) * u * (u - 1) / 6};
                const std::size_t np = s->npoints();
                for (std::size_t k = 0; k < i0.size(); ++k) {
                    int a = i0[k], b = (a + 1) % int(np);
                    Complex v{};
                    for (int q = 0; q < 4; ++q) {
                        std::size_t it = std::size_t(j - 1 + q);
                        v += lw[q] * ((1 - w[k]) * s->at(it, a) + w[k] * s->at(it, b));
                    }
                    out[k] = v;
                }
            }
        };
        auto e = std::make_unique<E>();
        e->s = &s_;
        const double np = double(s_.npoints());
        for (Vec2 p : pts) {
            double ang = std::atan2(p.y - c_.y, p.x - c_.x);
            if (ang < 0) ang += 2 * pi;
            double f = ang / (2 * pi) * np;
            int a = int(std::floor(f)) % int(np);
            e->i0.push_back(a);
            e->w.push_back(f - std::floor(f));
        }
        return e;
    }
    std::string key() const override { return key_; }

private:
    BoundarySignal s_;
    Vec2 c_;
    std::string key_;
};

}  // namespace

DataPtr analytic_data(std::string key, std::function<Complex(Vec2, double)> f) {
    return std::make_shared<Analytic>(std::move(key), std::move(f));
}
DataPtr zero_data() {
    return analytic_data("zero", [](Vec2, double) { return Complex{}; });
}
DataPtr combine(const DataPtr& a, Complex ca, const DataPtr& b, Complex cb) {
    return std::make_shared<Combined>(a, ca, b, cb);
}
DataPtr time_reversed(const DataPtr& f, double T) { return std::make_shared<Reversed>(f, T); }

// ---- signals ----

double signal_l2_norm(const BoundarySignal& s) {
    return std::sqrt(std::max(0.0, signal_pairing(s, s).real()));
}

Complex signal_pairing(const BoundarySignal& g, const BoundarySignal& f) {
    if (g.npoints() != f.npoints() || g.ntimes() != f.ntimes()) throw InvalidArgument("signals on different grids");
    const std::size_t nt = f.ntimes(), np = f.npoints();
    if (nt < 2) return {};
    double dtt = f.times[1] - f.times[0];
    Complex total{};
    for (std::size_t it = 0; it < nt; ++it) {
        Complex row{};
        for (std::size_t ip = 0; ip < np; ++ip) row += f.dsigma[ip] * std::conj(g.at(it, ip)) * f.at(it, ip);
        total += (it == 0 || it == nt - 1 ? 0.5 : 1.0) * dtt * row;
    }
    return total;
}

BoundarySignal signal_difference(const BoundarySignal& a, const BoundarySignal& b) {
    if (a.values.size() != b.values.size()) throw InvalidArgument("signals on different grids");
    BoundarySignal d = a;
    for (std::size_t k = 0; k < d.values.size(); ++k) d.values[k] -= b.values[k];
    return d;
}

void write_signal_csv(const BoundarySignal& s, const std::filesystem::path& p) {
    CsvWriter w(p, {"s", "t", "re", "im"});
    for (std::size_t it = 0; it < s.ntimes(); ++it)
        for (std::size_t ip = 0; ip < s.npoints(); ++ip)
            w.row({s.arclength[ip], s.times[it], s.at(it, ip).real(), s.at(it, ip).imag()});
}

void save_signal(const BoundarySignal& s, const std::filesystem::path& p) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error("cannot write " + tmp.string());
        auto put_vec = [&](const auto& v) {
            std::uint64_t n = v.size();
            f.write(reinterpret_cast<const char*>(&n), sizeof n);
            f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(n * sizeof(v[0])));
        };
        f.write("GWSIG1\0\0", 8);
        put_vec(s.angles);
        put_vec(s.arclength);
        put_vec(s.dsigma);
        put_vec(s.times);
        put_vec(s.values);
        char c = s.compatible;
        f.write(&c, 1);
    }
    // atomic publication
    std::filesystem::rename(tmp, p);
}

BoundarySignal load_signal(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error("cannot read " + p.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "GWSIG1", 6) != 0) throw Error("not a signal file: " + p.string());
    BoundarySignal s;
    auto get_vec = [&](auto& v) {
        std::uint64_t n = 0;
        f.read(reinterpret_cast<char*>(&n), sizeof n);
        if (!f || n > (1ull << 32)) throw Error("corrupt signal file: " + p.string());
        v.resize(n);
        f.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(v[0])));
    };
    get_vec(s.angles);
    get_vec(s.arclength);
    get_vec(s.dsigma);
    get_vec(s.times);
    get_vec(s.values);
    char c = 1;
    f.read(&c, 1);
    if (!f) throw Error("truncated signal file: " + p.string());
    s.compatible = c;
    return s;
}

// ---- grid ----

namespace {

void lagrange4(double t, double w[4]) {
    w[0] = -t * (t - 1) * (t - 2) / 6;
    w[1] = (t + 1) * (t - 1) * (t - 2) / 2;
    w[2] = -(t + 1) * t * (t - 2) / 2;
    w[3] = (t + 1) * t * (t - 1) / 6;
}

// derivative at 0 of the polynomial through (0, f0), (-d, f1), (-2d, f2), ...
Complex one_sided(int order, const Complex* f, double d) {
    if (order == 3) return (11.0 * f[0] - 18.0 * f[1] + 9.0 * f[2] - 2.0 * f[3]) / (6 * d);
    return (3.0 * f[0] - 4.0 * f[1] + f[2]) / (2 * d);
}

// angular step for tangential differences of boundary data
constexpr double kTangentStep = 2e-4;

}  // namespace

WaveGrid::WaveGrid(const Manifold& m, WaveConfig cfg) : m_(m), cfg_(cfg) {
    if (cfg.cells < 8) throw GridTooCoarse("wave grid needs at least 8 cells across M");
    if (!(cfg.cfl > 0.0 && cfg.cfl < 1.0))
        throw InvalidArgument("CFL ratio " + fmt17(cfg.cfl) + " violates 0 < CFL < 1; refusing to step");
    if (!(cfg.T > 0.0)) throw InvalidArgument("horizon T must be positive");
    if (cfg.trace_points < 8) throw GridTooCoarse("need at least 8 trace points");
    if (cfg.steps < 0) throw InvalidArgument("step count must be >= 0");
    if (cfg.trace_stride < 1) throw InvalidArgument("trace stride must be >= 1");
    if (cfg.trace_order != 2 && cfg.trace_order != 3) throw InvalidArgument("trace order must be 2 or 3");
    if (cfg.trace_pde && cfg.trace_order != 2) throw InvalidArgument("the equation-closed trace stencil uses 2 probes");

    const Disk& M = m.inner();
    const MetricField& g = m.metric();
    const int pad = 4;
    dx_ = 2.0 * M.radius / cfg.cells;
    nx_ = ny_ = cfg.cells + 1 + 2 * pad;
    origin_ = M.center - Vec2{M.radius + pad * dx_, M.radius + pad * dx_};
    const int N = nx_ * ny_;
    const int nbr[4] = {1, -1, nx_, -nx_};
    const Vec2 dir[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    // distance from an interior x to dM along e
    auto arm = [&](Vec2 x, Vec2 e) {
        Vec2 r = x - M.center;
        double bb = dot(r, e);
        return -bb + std::sqrt(bb * bb - (dot(r, r) - M.radius * M.radius));
    };
    mask_.assign(N, 0);
    for (int k = 0; k < N; ++k)
        if (M.level(node(k)) < 0.0) mask_[k] = 1;
    // drop nodes that sit within theta_min of dM along an arm
    const double theta_min = 0.25;
    std::vector<int> drop;
    for (int k = 0; k < N; ++k) {
        if (mask_[k] != 1) continue;
        for (int d = 0; d < 4; ++d)
            if (mask_[k + nbr[d]] != 1 && arm(node(k), dir[d]) < theta_min * dx_) {
                drop.push_back(k);
                break;
            }
    }
    for (int k : drop) mask_[k] = 0;
    for (int k = 0; k < N; ++k) {
        if (mask_[k] != 1) continue;
        int i = k % nx_, j = k / nx_;
        if (i < 2 || j < 2 || i > nx_ - 3 || j > ny_ - 3) throw Error("wave grid padding too small");
        interior_.push_back(k);
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di)
                if (mask_[k + dj * nx_ + di] == 0) mask_[k + dj * nx_ + di] = 2;
    }

    // metric coefficients near M
    auto& s = stencil_;
    s.nx = nx_;
    s.ny = ny_;
    s.dx = dx_;
    s.ax.assign(N, 0.0);
    s.ay.assign(N, 0.0);
    s.bxy.assign(N, 0.0);
    s.inv_vol.assign(N, 0.0);
    s.damp.assign(N, 0.0);
    s.pot.assign(N, 0.0);
    s.interior = interior_;
    vol_.assign(N, 0.0);
    cut_w_.assign(N, 0.0);
    for (int k = 0; k < N; ++k) {
        Vec2 x = node(k);
        if (M.level(x) > 3.0 * dx_) continue;
        MetricSample gs = g.eval(x);
        s.bxy[k] = gs.sqrt_det * gs.ginv.xy;
        MetricSample gx = g.eval(x + Vec2{0.5 * dx_, 0.0});
        MetricSample gy = g.eval(x + Vec2{0.0, 0.5 * dx_});
        s.ax[k] = gx.sqrt_det * gx.ginv.xx;
        s.ay[k] = gy.sqrt_det * gy.ginv.yy;
        if (mask_[k] == 1) {
            s.inv_vol[k] = 1.0 / gs.sqrt_det;
            vol_[k] = gs.sqrt_det * dx_ * dx_;
        }
        if (std::abs(s.bxy[k]) > 1e-14) s.mixed = true;
    }

    // cut arms: A (u_B - u_k) / (theta dx) replaces the face flux, so A / theta
    // joins the diagonal and A u_B / theta the forcing; the operator stays
    // symmetric in the sqrt|g| weighted inner product
    double lam = 0.0;
    for (int k : interior_) {
        double row = 0.0;
        for (int d = 0; d < 4; ++d) {
            int q = k + nbr[d];
            double A = d == 0 ? s.ax[k] : d == 1 ? s.ax[q] : d == 2 ? s.ay[k] : s.ay[q];
            if (mask_[q] == 1) {
                row += 2.0 * A;
                continue;
            }
            double th = arm(node(k), dir[d]) / dx_;
            double w = A / th;
            cut_w_[k] += w;
            cuts_.push_back({k, s.inv_vol[k] * w / (dx_ * dx_)});
            cut_pts_.push_back(node(k) + (th * dx_) * dir[d]);
            row += w;
        }
        s.pot[k] = s.inv_vol[k] * cut_w_[k] / (dx_ * dx_);
        if (s.mixed)
            row += std::abs(s.bxy[k + 1]) + std::abs(s.bxy[k - 1]) + std::abs(s.bxy[k + nx_]) + std::abs(s.bxy[k - nx_]);
        lam = std::max(lam, s.inv_vol[k] * row / (dx_ * dx_));
    }
    for (int k : interior_) {
        if (mask_[k + 1] != 1) s.ax[k] = 0.0;
        if (mask_[k - 1] != 1) s.ax[k - 1] = 0.0;
        if (mask_[k + nx_] != 1) s.ay[k] = 0.0;
        if (mask_[k - nx_] != 1) s.ay[k - nx_] = 0.0;
    }
    // leapfrog is stable for dt^2 lambda_max < 4
    double dt_max = cfg.cfl * 2.0 / std::sqrt(lam);
    if (cfg.steps > 0) {
        if (cfg.steps % cfg.trace_stride) throw InvalidArgument("step count must be a multiple of the trace stride");
        steps_ = cfg.steps;
    } else {
        steps_ = int(std::ceil(cfg.T / dt_max));
        steps_ = (steps_ + cfg.trace_stride - 1) / cfg.trace_stride * cfg.trace_stride;
    }
    dt_ = cfg.T / steps_;
    s.dt = dt_;
    cfl_ratio_ = dt_ * std::sqrt(lam) / 2.0;
    if (cfl_ratio_ >= 1.0)
        throw InvalidArgument("step count " + std::to_string(steps_) + " gives CFL ratio " + fmt17(cfl_ratio_) +
                              " >= 1; refusing to step");

    // ghosts for the mixed term: quadratic extrapolation along the Euclidean
    // normal through the boundary value and two interior probes
    for (int k = 0; k < N && s.mixed; ++k) {
        if (mask_[k] != 2) continue;
        Vec2 x = node(k);
        Vec2 b = M.project(x);
        Vec2 n = (b - M.center) / M.radius;
        double delta = dot(x - b, n);
        double d1 = probe_depth(b, 2.0 * dx_);
        double d2 = d1 + dx_;
        // Lagrange weights at s = delta for nodes s = 0, -d1, -d2
        double w0 = (delta + d1) * (delta + d2) / (d1 * d2);
        double w1 = delta * (delta + d2) / (-d1 * (d2 - d1));
        double w2 = delta * (delta + d1) / (d2 * (d2 - d1));
        Ghost gh{k, w0, {}};
        for (auto [d, w] : {std::pair{d1, w1}, std::pair{d2, w2}})
            for (auto q : cubic_stencil(b - d * n)) gh.w.push_back({q.node, w * q.w});
        std::sort(gh.w.begin(), gh.w.end(), [](auto& a, auto& c) { return a.node < c.node; });
        std::vector<Weighted> merged;
        for (auto& q : gh.w) {
            if (!merged.empty() && merged.back().node == q.node) merged.back().w += q.w;
            else merged.push_back(q);
        }
        gh.w = std::move(merged);
        ghosts_.push_back(std::move(gh));
        ghost_proj_.push_back(b);
    }

    // Neumann trace stencils
    const int nb = cfg.trace_points, order = cfg.trace_order;
    for (int ip = 0; ip < nb; ++ip) {
        double ang = 2.0 * pi * ip / nb;
        Vec2 b = M.point(ang);
        Vec2 n = (b - M.center) / M.radius;
        trace_angles_.push_back(ang);
        trace_pts_.push_back(b);
        trace_normals_.push_back(n);
        // equal spacing d: probes at d, 2d (, 3d) with interior cubic stencils
        double d = 2.0 * dx_;
        for (;; d += 0.25 * dx_) {
            if (d > 0.5 * M.radius) throw GridTooCoarse("no interior trace stencil near the boundary");
            bool ok = true;
            for (int j = 1; j <= order && ok; ++j) ok = !cubic_stencil(b - (j * d) * n).empty();
            if (ok) break;
        }
        trace_depth_.push_back(d);
        trace_stencil_pts_.push_back(b);
        for (int j = 1; j <= order; ++j) {
            trace_stencil_pts_.push_back(b - (j * d) * n);
            trace_probe_w_.push_back(cubic_stencil(b - (j * d) * n));
        }
    }
}

std::vector<WaveGrid::Weighted> WaveGrid::cubic_stencil(Vec2 x) const {
    double fx = (x.x - origin_.x) / dx_, fy = (x.y - origin_.y) / dx_;
    int i = int(std::floor(fx)), j = int(std::floor(fy));
    if (i < 1 || j < 1 || i + 2 >= nx_ || j + 2 >= ny_) return {};
    double wx[4], wy[4];
    lagrange4(fx - i, wx);
    lagrange4(fy - j, wy);
    std::vector<Weighted> out;
    out.reserve(16);
    for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a) {
            int k = (j - 1 + b) * nx_ + (i - 1 + a);
            if (mask_[k] != 1) return {};
            out.push_back({k, wx[a] * wy[b]});
        }
    return out;
}

double WaveGrid::probe_depth(Vec2 b, double start) const {
    const Disk& M = m_.inner();
    Vec2 n = (b - M.center) / M.radius;
    for (double d = start; d < 0.5 * M.radius; d += 0.25 * dx_)
        if (!cubic_stencil(b - d * n).empty() && !cubic_stencil(b - (d + dx_) * n).empty()) return d;
    throw GridTooCoarse("no interior probe stencil for a ghost node");
}

void WaveGrid::add_boundary_forcing(cvec& src, std::span<const Complex> cv) const {
    for (std::size_t q = 0; q < cuts_.size(); ++q) src[cuts_[q].node] += cuts_[q].coef * cv[q];
}

void WaveGrid::fill_ghosts(cvec& u, std::span<const Complex> bv) const {
    for (std::size_t q = 0; q < ghosts_.size(); ++q) {
        const Ghost& g = ghosts_[q];
        Complex v = g.wb * bv[q];
        for (const auto& w : g.w) v += w.w * u[w.node];
        u[g.node] = v;
    }
}

Complex WaveGrid::interpolate(const cvec& u, Vec2 x) const {
    auto st = cubic_stencil(x);
    if (st.empty()) throw OutOfDomain("interpolation stencil leaves the interior");
    Complex v{};
    for (auto& w : st) v += w.w * u[w.node];
    return v;
}

BoundarySignal WaveGrid::empty_trace() const {
    BoundarySignal s;
    const Disk& M = m_.inner();
    const int nb = cfg_.trace_points;
    double acc = 0.0;
    for (int ip = 0; ip < nb; ++ip) {
        double ang = trace_angles_[ip];
        double sp = m_.boundary_speed(M, ang);
        s.angles.push_back(ang);
        s.arclength.push_back(acc);
        s.dsigma.push_back(sp * 2.0 * pi / nb);
        acc += sp * 2.0 * pi / nb;
    }
    for (int n = 0; n <= steps_; n += cfg_.trace_stride) s.times.push_back(n * dt_);
    s.values.assign(s.angles.size() * s.times.size(), Complex{});
    return s;
}

std::string WaveGrid::describe() const { return m_.describe() + ";" + cfg_.describe(); }

GridPtr make_wave_grid(const Manifold& m, WaveConfig cfg) { return std::make_shared<const WaveGrid>(m, cfg); }

void check_horizon(const Manifold& m, double T, double eps) {
    if (eps <= 0.0) throw InvalidArgument("cutoff width eps must be positive");
    double diam = m.diameter();
    if (!(T > diam + 2.0 * eps))
        throw InvalidArgument("horizon T = " + fmt17(T) + " must exceed Diam(M1) + 2 eps = " + fmt17(diam + 2 * eps));
}

// ---- solver ----

namespace {

// Neumann trace evaluation shared by the solvers.
//
// Along the inward Euclidean normal, u(B - s nu) = u0 - s u_n + s^2/2 u_nn + O(s^3)
// with probes at s = d, 2d. With trace_pde, u_nn comes from
//   Delta_g u = u_tt + a u_t + q u - F
//   Delta_g u = g^nn u_nn + 2 g^nt u_nt + g^tt (u_ss + u_n / R) + b^n u_n + b^t u_t
// where s is Euclidean arclength on dM and b^j = |g|^{-1/2} d_i(|g|^{1/2} g^ij).
class TraceEval {
public:
    TraceEval(const WaveGrid& g, const BoundaryData* data, const Coefficients& c,
              const std::function<Complex(Vec2, double)>* source)
        : g_(g), source_(source) {
        const Disk& M = g.manifold().inner();
        const MetricField& met = g.manifold().metric();
        const auto& pts = g.trace_points();
        const int nb = int(pts.size());
        R_ = M.radius;
        std::vector<Vec2> dp;
        for (int ip = 0; ip < nb; ++ip) {
            double a = 2.0 * pi * ip / nb;
            dp.push_back(pts[ip]);
            dp.push_back(M.point(a + kTangentStep));
            dp.push_back(M.point(a - kTangentStep));
            Vec2 n = g.trace_normal(ip), tau{-n.y, n.x};
            MetricSample ms = met.eval(pts[ip]);
            Vec2 gn = ms.ginv.apply(n);
            conormal_.push_back(gn / std::sqrt(dot(n, gn)));
            Local L;
            L.gnn = dot(n, gn);
            L.gnt = dot(tau, gn);
            L.gtt = dot(tau, ms.ginv.apply(tau));
            // b^j by central differences of sqrt|g| g^ij
            const double e = 1e-5;
            MetricSample xp = met.eval(pts[ip] + Vec2{e, 0}), xm = met.eval(pts[ip] - Vec2{e, 0});
            MetricSample yp = met.eval(pts[ip] + Vec2{0, e}), ym = met.eval(pts[ip] - Vec2{0, e});
            Vec2 b{(xp.sqrt_det * xp.ginv.xx - xm.sqrt_det * xm.ginv.xx + yp.sqrt_det * yp.ginv.xy -
                    ym.sqrt_det * ym.ginv.xy),
                   (xp.sqrt_det * xp.ginv.xy - xm.sqrt_det * xm.ginv.xy + yp.sqrt_det * yp.ginv.yy -
                    ym.sqrt_det * ym.ginv.yy)};
            b = b / (2.0 * e * ms.sqrt_det);
            L.bn = dot(b, n);
            L.bt = dot(b, tau);
            L.a = c.a(pts[ip]);
            L.q = c.q(pts[ip]);
            if (std::abs(L.gnt) > 1e-12) mixed_ = true;
            local_.push_back(L);
        }
        if (data) {
            bound_ = data->bind(dp);
            v0_.resize(dp.size());
            vp_.resize(dp.size());
            vm_.resize(dp.size());
        }
        pde_ = g.config().trace_pde;
        ds_ = R_ * kTangentStep;
        un_.resize(nb);
        probes_.resize(nb);
    }

    void operator()(const cvec& u, double t, std::span<Complex> out) {
        const int order = g_.config().trace_order;
        const int nb = int(g_.trace_points().size());
        if (bound_) {
            bound_->eval(t, v0_);
            if (pde_) {
                bound_->eval(t + kTimeStep, vp_);
                bound_->eval(t - kTimeStep, vm_);
            }
        }
        std::vector<Complex> ut(nb), rhs(nb);
        for (int ip = 0; ip < nb; ++ip) {
            Complex f[4];
            f[0] = bound_ ? v0_[3 * ip] : Complex{};
            for (int j = 1; j <= order; ++j) {
                Complex v{};
                for (auto& w : g_.trace_probe(ip, j)) v += w.w * u[w.node];
                f[j] = v;
            }
            const double d = g_.trace_spacing(ip);
            ut[ip] = bound_ ? (v0_[3 * ip + 1] - v0_[3 * ip + 2]) / (2.0 * ds_) : Complex{};
            if (!pde_) {
                un_[ip] = one_sided(order, f, d);
                continue;
            }
            const Local& L = local_[ip];
            Complex ft{}, ftt{}, fss{};
            if (bound_) {
                ft = (vp_[3 * ip] - vm_[3 * ip]) / (2.0 * kTimeStep);
                ftt = (vp_[3 * ip] - 2.0 * v0_[3 * ip] + vm_[3 * ip]) / (kTimeStep * kTimeStep);
                fss = (v0_[3 * ip + 1] - 2.0 * v0_[3 * ip] + v0_[3 * ip + 2]) / (ds_ * ds_);
            }
            Complex src = source_ && *source_ ? (*source_)(g_.trace_points()[ip], t) : Complex{};
            // u_nn = P + Q u_n (P without the mixed term)
            rhs[ip] = (ftt + L.a * ft + L.q * f[0] - src - L.gtt * fss - L.bt * ut[ip]) / L.gnn;
            double Q = -(L.gtt / R_ + L.bn) / L.gnn;
            probes_[ip] = 7.0 * f[0] - 8.0 * f[1] + f[2];
            un_[ip] = (probes_[ip] + 2.0 * d * d * rhs[ip]) / (6.0 * d - 2.0 * d * d * Q);
        }
        if (pde_ && mixed_) {
            // second pass with u_nt = d_s u_n - u_t / R from the first pass
            std::vector<Complex> first = un_;
            const double h = 2.0 * pi * R_ / nb;
            for (int ip = 0; ip < nb; ++ip) {
                const Local& L = local_[ip];
                Complex unt = (first[(ip + 1) % nb] - first[(ip + nb - 1) % nb]) / (2.0 * h) - ut[ip] / R_;
                const double d = g_.trace_spacing(ip);
                double Q = -(L.gtt / R_ + L.bn) / L.gnn;
                Complex P = rhs[ip] - 2.0 * L.gnt * unt / L.gnn;
                un_[ip] = (probes_[ip] + 2.0 * d * d * P) / (6.0 * d - 2.0 * d * d * Q);
            }
        }
        for (int ip = 0; ip < nb; ++ip) {
            Vec2 n = g_.trace_normal(ip);
            Vec2 tau{-n.y, n.x};
            Vec2 c = conormal_[ip];
            out[ip] = un_[ip] * dot(c, n) + ut[ip] * dot(c, tau);
        }
    }

private:
    static constexpr double kTimeStep = 1e-3;
    struct Local {
        double gnn, gnt, gtt, bn, bt, a, q;
    };
    const WaveGrid& g_;
    const std::function<Complex(Vec2, double)>* source_;
    std::unique_ptr<BoundaryEval> bound_;
    std::vector<Complex> v0_, vp_, vm_, un_, probes_;
    std::vector<Vec2> conormal_;
    std::vector<Local> local_;
    double R_ = 1.0, ds_ = 0.0;
    bool pde_ = true, mixed_ = false;
};

kernels::WaveStencil with_coefficients(const WaveGrid& g, const Coefficients& c) {
    kernels::WaveStencil s = g.stencil();
    for (int k : g.interior()) {
        Vec2 x = g.node(k);
        s.damp[k] = c.a(x);
        s.pot[k] += c.q(x);
    }
    return s;
}

double max_abs_interior(const WaveGrid& g, const cvec& u) {
    double m = 0.0;
    for (int k : g.interior()) m = std::max(m, std::abs(u[k]));
    return m;
}

// E^{n+1/2} = 1/2 |(u1 - u0)/dt|^2 + 1/2 Re B(u1, u0)
struct EnergyParts {
    double kinetic = 0.0, gradient = 0.0, potential = 0.0;
    double total() const { return 0.5 * (kinetic + gradient + potential); }
};

EnergyParts discrete_energy(const WaveGrid& g, const kernels::WaveStencil& s, const cvec& u1, const cvec& u0) {
    EnergyParts e;
    const int nx = g.nx();
    const double dt = g.dt();
    for (int k : g.interior()) {
        e.kinetic += g.volume(k) * std::norm((u1[k] - u0[k]) / dt);
        // s.pot carries the cut-arm diagonal, which belongs to the gradient part
        double r = std::real(u1[k] * std::conj(u0[k]));
        e.potential += (g.volume(k) * s.pot[k] - g.cut_weight(k)) * r;
        e.gradient += g.cut_weight(k) * r;
        // faces to the right and above, plus left/below faces whose other side is not interior
        auto face = [&](int a, int b, double coef) {
            e.gradient += coef * std::real((u1[b] - u1[a]) * std::conj(u0[b] - u0[a]));
        };
        face(k, k + 1, s.ax[k]);
        face(k, k + nx, s.ay[k]);
        if (!g.is_interior(k - 1)) face(k - 1, k, s.ax[k - 1]);
        if (!g.is_interior(k - nx)) face(k - nx, k, s.ay[k - nx]);
        if (s.mixed) {
            Complex ux1 = 0.5 * (u1[k + 1] - u1[k - 1]), uy1 = 0.5 * (u1[k + nx] - u1[k - nx]);
            Complex ux0 = 0.5 * (u0[k + 1] - u0[k - 1]), uy0 = 0.5 * (u0[k + nx] - u0[k - nx]);
            e.gradient += s.bxy[k] * std::real(ux1 * std::conj(uy0) + uy1 * std::conj(ux0));
        }
    }
    return e;
}

SolveResult run(const WaveGrid& g, const Coefficients& c, const BoundaryData* data, const cvec* u0, const cvec* u1,
                const SolveOptions& opt, double scale) {
    const int N = g.nx() * g.ny();
    const double dt = g.dt();
    const int stride = g.config().trace_stride;
    kernels::WaveStencil s = with_coefficients(g, c);

    std::unique_ptr<BoundaryEval> ghost_data, cut_data;
    std::vector<Complex> gvals(g.ghost_count()), cvals(g.cut_points().size());
    if (data) {
        if (g.ghost_count()) ghost_data = data->bind(g.ghost_projections());
        cut_data = data->bind(g.cut_points());
    }
    auto ghosts_at = [&](cvec& u, double t) {
        if (ghost_data) ghost_data->eval(t, gvals);
        g.fill_ghosts(u, gvals);
    };

    SolveResult res;
    std::optional<TraceEval> trace;
    if (opt.want_trace) {
        res.trace = g.empty_trace();
        trace.emplace(g, data, c, &opt.source);
    }
    cvec src;
    // interior source plus the forcing of the cut arms at time t
    auto source_at = [&](double t) {
        if (!opt.source && !cut_data) return;
        src.assign(N, Complex{});
        if (opt.source)
            for (int k : g.interior()) {
                src[k] = opt.source(g.node(k), t);
                scale = std::max(scale, std::abs(src[k]) * g.config().T * g.config().T);
            }
        if (cut_data) {
            cut_data->eval(t, cvals);
            for (auto& v : cvals) scale = std::max(scale, std::abs(v));
            g.add_boundary_forcing(src, cvals);
        }
    };

    cvec prev(N), cur(N), next(N);
    if (u0) {
        prev = *u0;
        cur = *u1;
    } else {
        // u^0 = 0, u^1 = dt^2/2 F(0)
        source_at(0.0);
        if (!src.empty())
            for (int k : g.interior()) cur[k] = 0.5 * dt * dt * src[k];
    }
    ghosts_at(prev, 0.0);
    ghosts_at(cur, dt);
    if (data) {
        std::vector<Complex> at0(g.cut_points().size());
        cut_data->eval(0.0, at0);
        double m0 = 0.0;
        for (auto& v : at0) m0 = std::max(m0, std::abs(v));
        if (m0 > 1e-12 * std::max(1.0, scale)) res.trace.compatible = false;
    }
    auto record = [&](int n, const cvec& u) {
        if (trace && n % stride == 0) {
            std::span<Complex> row(&res.trace.values[std::size_t(n / stride) * res.trace.npoints()],
                                   res.trace.npoints());
            (*trace)(u, n * dt, row);
        }
        if (opt.observer) opt.observer(n, u);
    };
    record(0, prev);
    if (opt.want_energy) {
        auto e = discrete_energy(g, s, cur, prev);
        res.energy.push_back(e.total());
    }
    record(1, cur);
    for (int n = 1; n < g.steps(); ++n) {
        source_at(n * dt);
        kernels::wave_step(s, cur, prev, src, next, g.config().exec);
        ghosts_at(next, (n + 1) * dt);
        std::swap(prev, cur);
        std::swap(cur, next);
        if (opt.want_energy) {
            auto e = discrete_energy(g, s, cur, prev);
            res.energy.push_back(e.total());
        }
        record(n + 1, cur);
        if ((n + 1) % stride == 0 || n + 1 == g.steps()) {
            double m = max_abs_interior(g, cur);
            res.max_abs = std::max(res.max_abs, m);
            if (!std::isfinite(m) || m > opt.blowup_factor * std::max(scale, 1e-300))
                throw Instability("wave field grew to " + fmt17(m) + " at t = " + fmt17((n + 1) * dt) +
                                  " against data scale " + fmt17(scale));
        }
    }
    res.final_u = std::move(cur);
    return res;
}

}  // namespace

SolveResult solve_ibvp(const GridPtr& grid, const Coefficients& c, const DataPtr& dirichlet, SolveOptions opt) {
    if (!grid) throw Error("solve needs a grid");
    if (!dirichlet) throw Error("solve needs Dirichlet data");
    return run(*grid, c, dirichlet.get(), nullptr, nullptr, opt, 0.0);
}

SolveResult solve_free(const GridPtr& grid, const Coefficients& c, const std::function<double(Vec2)>& u0f,
                       const std::function<double(Vec2)>& u1f, SolveOptions opt) {
    const WaveGrid& g = *grid;
    const int N = g.nx() * g.ny();
    const double dt = g.dt();
    cvec u0(N), v(N), lap(N);
    double scale = 0.0;
    for (int k : g.interior()) {
        u0[k] = u0f(g.node(k));
        v[k] = u1f(g.node(k));
        scale = std::max(scale, std::abs(u0[k]) + g.config().T * std::abs(v[k]));
    }
    // Taylor start: u^1 = u0 + dt u1 + dt^2/2 (L u0 - q u0 - a u1)
    kernels::WaveStencil s = with_coefficients(g, c);
    std::vector<double> damp = s.damp;
    std::fill(s.damp.begin(), s.damp.end(), 0.0);
    kernels::wave_step(s, u0, u0, {}, lap, Exec::serial);  // u0 + dt^2 (L - q) u0
    cvec u1(N);
    for (int k : g.interior()) u1[k] = u0[k] + dt * v[k] + 0.5 * (lap[k] - u0[k]) - 0.5 * dt * dt * damp[k] * v[k];
    return run(g, c, nullptr, &u0, &u1, opt, scale);
}

// ---- DtN ----

DtnOperator::DtnOperator(GridPtr grid, Coefficients c, std::filesystem::path cache_dir)
    : grid_(std::move(grid)), c_(std::move(c)), cache_dir_(std::move(cache_dir)) {}

std::string DtnOperator::key(const DataPtr& f, bool adjoint) const {
    return content_hash(grid_->describe() + "|" + c_.describe() + "|" + f->key() + (adjoint ? "|adjoint" : "|forward"));
}

BoundarySignal DtnOperator::apply(const DataPtr& f) const {
    const std::string k = key(f, false);
    {
        std::lock_guard<std::mutex> lock(mu_);
        if (auto it = memo_.find(k); it != memo_.end()) {
            ++hits_;
            return *it->second;
        }
    }
    std::filesystem::path file;
    if (!cache_dir_.empty()) {
        file = cache_dir_ / (k + ".sig");
        if (std::filesystem::exists(file)) {
            auto sig = std::make_shared<const BoundarySignal>(load_signal(file));
            std::lock_guard<std::mutex> lock(mu_);
            ++hits_;
            memo_.emplace(k, sig);
            return *sig;
        }
    }
    auto sig = std::make_shared<const BoundarySignal>(solve_ibvp(grid_, c_, f).trace);
    if (!file.empty()) {
        std::filesystem::create_directories(cache_dir_);
        save_signal(*sig, file);
    }
    std::lock_guard<std::mutex> lock(mu_);
    ++solves_;
    memo_.emplace(k, sig);
    return *sig;
}

BoundarySignal DtnOperator::apply_adjoint(const DataPtr& f) const {
    // v(t) = V(T - t) with V a forward solution for the reversed data
    BoundarySignal r = apply(time_reversed(f, grid_->config().T));
    BoundarySignal out = r;
    const std::size_t nt = r.ntimes(), np = r.npoints();
    for (std::size_t it = 0; it < nt; ++it)
        for (std::size_t ip = 0; ip < np; ++ip) out.at(it, ip) = r.at(nt - 1 - it, ip);
    out.compatible = true;
    return out;
}

// ---- norms, gap, energy ----

BoundarySignal sample_data(const WaveGrid& g, const DataPtr& f) {
    BoundarySignal s = g.empty_trace();
    auto e = f->bind(g.trace_points());
    for (std::size_t it = 0; it < s.ntimes(); ++it) {
        std::span<Complex> row(&s.values[it * s.npoints()], s.npoints());
        e->eval(s.times[it], row);
    }
    return s;
}

double data_h1_norm(const WaveGrid& g, const DataPtr& f) {
    const Disk& M = g.manifold().inner();
    const auto& pts = g.trace_points();
    const int nb = int(pts.size());
    std::vector<Vec2> dp;
    std::vector<double> ds(nb);
    for (int ip = 0; ip < nb; ++ip) {
        double a = 2.0 * pi * ip / nb;
        dp.push_back(pts[ip]);
        dp.push_back(M.point(a + kTangentStep));
        dp.push_back(M.point(a - kTangentStep));
        ds[ip] = g.manifold().boundary_speed(M, a) * 2.0 * pi / nb;
    }
    auto e = f->bind(dp);
    std::vector<Complex> v0(dp.size()), vp(dp.size()), vm(dp.size());
    const double dt = g.dt(), h = 1e-5;
    double total = 0.0;
    for (int n = 0; n <= g.steps(); ++n) {
        double t = n * dt;
        e->eval(t, v0);
        e->eval(t + h, vp);
        e->eval(t - h, vm);
        double row = 0.0;
        for (int ip = 0; ip < nb; ++ip) {
            double speed = ds[ip] * nb / (2.0 * pi);
            Complex f0 = v0[3 * ip];
            Complex ft = (vp[3 * ip] - vm[3 * ip]) / (2 * h);
            Complex fs = (v0[3 * ip + 1] - v0[3 * ip + 2]) / (2 * kTangentStep * speed);
            row += ds[ip] * (std::norm(f0) + std::norm(ft) + std::norm(fs));
        }
        total += (n == 0 || n == g.steps() ? 0.5 : 1.0) * dt * row;
    }
    return std::sqrt(total);
}

GapEstimate dtn_gap_norm(const DtnOperator& a, const DtnOperator& b, const std::vector<DataPtr>& probes,
                         int power_iterations) {
    if (probes.empty()) throw InvalidArgument("gap norm needs at least one probe");
    const WaveGrid& g = *a.grid();
    GapEstimate est;
    DataPtr best;
    double best_ratio = -1.0;
    for (const auto& f : probes) {
        double fn = data_h1_norm(g, f);
        if (fn == 0.0) throw InvalidArgument("gap norm probe with zero H1 norm");
        BoundarySignal d = signal_difference(a.apply(f), b.apply(f));
        double r = signal_l2_norm(d) / fn;
        est.probe_ratios.push_back(r);
        if (r > best_ratio) {
            best_ratio = r;
            best = f;
        }
    }
    est.value = best_ratio;
    // power iteration f <- taper (L1* - L2*)(L1 - L2) f
    const double T = g.config().T;
    const Vec2 c = g.manifold().inner().center;
    DataPtr f = best;
    for (int it = 0; it < power_iterations; ++it) {
        BoundarySignal d = signal_difference(a.apply(f), b.apply(f));
        if (signal_l2_norm(d) == 0.0) break;
        DataPtr dd = std::make_shared<Sampled>(d, c);
        BoundarySignal back = signal_difference(a.apply_adjoint(dd), b.apply_adjoint(dd));
        // smooth taper keeps the next probe compatible at t = 0 and quiet near T
        for (std::size_t k = 0; k < back.ntimes(); ++k) {
            double t = back.times[k], w = 1.0;
            double ramp = 0.1 * T;
            if (t < ramp) w = std::pow(std::sin(0.5 * pi * t / ramp), 2);
            if (t > T - ramp) w = std::pow(std::sin(0.5 * pi * (T - t) / ramp), 2);
            for (std::size_t ip = 0; ip < back.npoints(); ++ip) back.at(k, ip) *= w;
        }
        double scale = signal_l2_norm(back);
        if (scale == 0.0) break;
        for (auto& v : back.values) v /= scale;
        f = std::make_shared<Sampled>(back, c);
        double fn = data_h1_norm(g, f);
        double r = signal_l2_norm(signal_difference(a.apply(f), b.apply(f))) / fn;
        est.power_ratios.push_back(r);
        est.value = std::max(est.value, r);
    }
    return est;
}

EnergyReport energy_residual(const GridPtr& grid, const Coefficients& c,
                             const std::function<Complex(Vec2, double)>& source) {
    const WaveGrid& g = *grid;
    EnergyReport rep;
    double fq = 0.0;
    for (int n = 0; n <= g.steps(); ++n) {
        double row = 0.0;
        for (int k : g.interior()) row += g.volume(k) * std::norm(source(g.node(k), n * g.dt()));
        fq += (n == 0 || n == g.steps() ? 0.5 : 1.0) * g.dt() * row;
    }
    rep.source_norm = std::sqrt(fq);
    if (rep.source_norm == 0.0) return rep;
    kernels::WaveStencil s = with_coefficients(g, c);
    cvec last;
    double best = 0.0;
    SolveOptions opt;
    opt.source = source;
    opt.want_trace = false;
    opt.observer = [&](int n, const cvec& u) {
        if (n > 0) {
            EnergyParts e = discrete_energy(g, s, u, last);
            best = std::max(best, std::sqrt(e.kinetic) + std::sqrt(std::max(0.0, e.gradient)));
        }
        last = u;
    };
    solve_ibvp(grid, c, zero_data(), opt);
    rep.ratio = best / rep.source_norm;
    return rep;
}

}  // namespace geowave
