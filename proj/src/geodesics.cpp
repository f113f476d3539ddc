#include "geowave/geodesics.hpp"

#include <algorithm>
#include <cstdio>

namespace geowave {

namespace {

struct Deriv {
    Vec2 dx, dv;
    double dj, ddj;
};

Deriv rhs(const MetricField& g, const GeoState& s, bool jacobi) {
    Deriv d;
    d.dx = s.v;
    g.geodesic_accel(s.x, s.v, d.dv);
    if (jacobi) {
        d.dj = s.dj;
        d.ddj = -g.gaussian_curvature(s.x) * s.j;
    } else {
        d.dj = d.ddj = 0.0;
    }
    return d;
}

GeoState advance(const GeoState& s, const Deriv& d, double h) {
    return {s.x + h * d.dx, s.v + h * d.dv, s.j + h * d.dj, s.dj + h * d.ddj};
}

std::string where(Vec2 x, double t) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "geodesic left the chart at (%.6g, %.6g), t = %.6g", x.x, x.y, t);
    return buf;
}

}  // namespace

GeoState rk4_step(const MetricField& g, const GeoState& s, double h, bool jacobi) {
    Deriv k1 = rhs(g, s, jacobi);
    Deriv k2 = rhs(g, advance(s, k1, 0.5 * h), jacobi);
    Deriv k3 = rhs(g, advance(s, k2, 0.5 * h), jacobi);
    Deriv k4 = rhs(g, advance(s, k3, h), jacobi);
    GeoState o;
    o.x = s.x + (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    o.v = s.v + (h / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
    if (jacobi) {
        o.j = s.j + (h / 6.0) * (k1.dj + 2.0 * k2.dj + 2.0 * k3.dj + k4.dj);
        o.dj = s.dj + (h / 6.0) * (k1.ddj + 2.0 * k2.ddj + 2.0 * k3.ddj + k4.ddj);
    } else {
        o.j = s.j;
        o.dj = s.dj;
    }
    return o;
}

PhasePoint flow(const MetricField& g, PhasePoint p, double t, double step) {
    if (t == 0.0) return p;
    if (!g.contains(p.x)) throw OutOfDomain(where(p.x, 0.0));
    int n = std::max(1, static_cast<int>(std::ceil(std::abs(t) / step - 1e-9)));
    double h = t / n;
    GeoState s{p.x, p.xi};
    for (int i = 0; i < n; ++i) {
        s = rk4_step(g, s, h, false);
        if (!g.contains(s.x)) throw OutOfDomain(where(s.x, (i + 1) * h));
    }
    return {s.x, s.v};
}

TracedRay trace_to_exit(const MetricField& g, PhasePoint p, const Disk& b, TraceOptions opt) {
    const double h = opt.step;
    if (b.level(p.x) > 1e-9) throw InvalidArgument("trace start lies outside the boundary");
    TracedRay ray;
    GeoState s{p.x, p.xi, 0.0, 1.0};
    ray.samples.push_back({0.0, s});
    auto normal_speed = [&](const GeoState& st) {
        Vec2 n = b.grad(st.x);
        return std::abs(dot(n, st.v)) / std::sqrt(g.eval(st.x).ginv.quad(n));
    };
    if (b.level(p.x) > -1e-12 && dot(b.grad(p.x), p.xi) >= 0.0) {
        ray.normal_speed = normal_speed(s);
        ray.grazing = ray.normal_speed < opt.graze_tol;
        return ray;
    }
    double t = 0.0;
    const int max_steps = 10000000;
    for (int it = 0; it < max_steps; ++it) {
        GeoState next = rk4_step(g, s, h, opt.jacobi);
        if (!g.contains(next.x)) throw OutOfDomain(where(next.x, t + h));
        if (b.level(next.x) <= 0.0) {
            s = next;
            t += h;
            ray.samples.push_back({t, s});
            continue;
        }
        // the boundary is crossed inside this step
        double lo = 0.0, hi = h;
        if (it == 0) {
            const int sub = 16;
            for (int k = 1; k <= sub; ++k) {
                double tau = h * k / sub;
                if (b.level(rk4_step(g, s, tau, false).x) > 0.0) {
                    lo = h * (k - 1) / sub;
                    hi = tau;
                    break;
                }
            }
        }
        for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, h); ++k) {
            double mid = 0.5 * (lo + hi);
            if (b.level(rk4_step(g, s, mid, false).x) > 0.0)
                hi = mid;
            else
                lo = mid;
        }
        double tau = 0.5 * (lo + hi);
        for (int k = 0; k < 2; ++k) {
            GeoState e = rk4_step(g, s, tau, false);
            double fp = dot(b.grad(e.x), e.v);
            if (fp == 0.0) break;
            double cand = tau - b.level(e.x) / fp;
            if (cand < 0.0 || cand > h) break;
            tau = cand;
        }
        GeoState e = rk4_step(g, s, tau, opt.jacobi);
        ray.exit = t + tau;
        ray.samples.push_back({ray.exit, e});
        ray.normal_speed = normal_speed(e);
        ray.grazing = ray.normal_speed < opt.graze_tol;
        return ray;
    }
    throw NonConvergence("geodesic did not exit (trapped or step too small)");
}

ExitResult exit_time(const MetricField& g, PhasePoint p, const Disk& b, double step) {
    TracedRay r = trace_to_exit(g, p, b, {step, false});
    const auto& last = r.samples.back().s;
    return {r.exit, {last.x, last.v}, r.grazing};
}

double exit_time_backward(const MetricField& g, PhasePoint p, const Disk& b, double step) {
    return -exit_time(g, {p.x, -p.xi}, b, step).time;
}

Vec2 exp_map(const MetricField& g, Vec2 y, Vec2 v, double step) {
    double r = std::sqrt(g.eval(y).g.quad(v));
    if (r == 0.0) return y;
    return flow(g, {y, v / r}, r, step).x;
}

Vec2 unit_normal(const Sym2& g, Vec2 v, double orientation) {
    Vec2 u = g.apply(v);
    Vec2 w{-u.y, u.x};
    return (orientation / std::sqrt(g.quad(w))) * w;
}

FiberFrame chart_frame(const MetricField& g, Vec2 y) {
    Sym2 G = g.eval(y).g;
    Vec2 e1 = Vec2{1.0, 0.0} / std::sqrt(G.xx);
    Vec2 e2{0.0, 1.0};
    e2 -= G.quad(e1, e2) * e1;
    e2 = e2 / std::sqrt(G.quad(e2));
    return {y, e1, e2};
}

namespace {

GeoState integrate_jacobi(const MetricField& g, Vec2 y, Vec2 xi, double r, double step) {
    int n = std::max(1, static_cast<int>(std::ceil(r / step - 1e-9)));
    double h = r / n;
    GeoState s{y, xi, 0.0, 1.0};
    for (int i = 0; i < n; ++i) {
        s = rk4_step(g, s, h, true);
        if (!g.contains(s.x)) throw OutOfDomain(where(s.x, (i + 1) * h));
    }
    return s;
}

}  // namespace

PolarPoint polar_coordinates(const MetricField& g, const FiberFrame& f, Vec2 x, ShootOptions opt, double r,
                             double beta) {
    PolarPoint out;
    std::vector<double> hist;
    for (int it = 0; it < opt.max_iter; ++it) {
        Vec2 xi = f.direction(beta);
        GeoState e = integrate_jacobi(g, f.y, xi, r, opt.step);
        Vec2 F = e.x - x;
        double res = norm(F);
        hist.push_back(res);
        if (res < opt.tol) {
            out.r = r;
            out.beta = beta;
            out.alpha = e.j * e.j;
            out.grad = e.v;
            out.iterations = it;
            out.residual = res;
            return out;
        }
        Vec2 N = unit_normal(g.g_at(e.x), e.v, f.orientation());
        Vec2 c1 = e.v, c2 = e.j * N;
        double det = cross(c1, c2);
        if (std::abs(det) < 1e-300) break;
        double dr = cross(-F, c2) / det;
        double db = cross(c1, -F) / det;
        db = std::clamp(db, -0.5, 0.5);
        if (r + dr <= 0.0) dr = -0.5 * r;
        r += dr;
        beta += db;
    }
    throw NonConvergence("shooting for geodesic polar coordinates did not converge", hist);
}

PolarPoint polar_coordinates(const MetricField& g, const FiberFrame& f, Vec2 x, ShootOptions opt) {
    Vec2 d = x - f.y;
    if (g.is_flat()) {
        PolarPoint p;
        p.r = norm(d);
        p.beta = std::atan2(dot(d, f.e2), dot(d, f.e1));
        p.alpha = p.r * p.r;
        p.grad = d / p.r;
        return p;
    }
    Sym2 G = g.eval(f.y).g;
    double beta0 = std::atan2(G.quad(d, f.e2), G.quad(d, f.e1));
    double r0 = 0.0;
    const int n = 16;
    for (int k = 0; k < n; ++k) r0 += std::sqrt(g.eval(f.y + ((k + 0.5) / n) * d).g.quad(d)) / n;
    return polar_coordinates(g, f, x, opt, r0, beta0);
}

DistanceResult distance(const MetricField& g, Vec2 y, Vec2 x, ShootOptions opt) {
    if (!g.contains(y) || !g.contains(x)) throw OutOfDomain("distance endpoint outside the chart");
    DistanceResult out;
    if (norm(x - y) == 0.0) return out;
    PolarPoint p = polar_coordinates(g, chart_frame(g, y), x, opt);
    out.rho = p.r;
    out.grad = p.grad;
    out.iterations = p.iterations;
    out.residual = p.residual;
    return out;
}

double polar_volume(const MetricField& g, Vec2 y, double r, Vec2 xi, double step) {
    if (r <= 0.0) throw InvalidArgument("polar volume needs r > 0");
    GeoState e = integrate_jacobi(g, y, xi, r, step);
    if (e.j <= 0.0) throw Error("polar volume requested past a conjugate point");
    return e.j * e.j;
}

double eikonal_residual(const MetricField& g, Vec2 y, const std::vector<Vec2>& samples, double fd,
                        ShootOptions opt) {
    double worst = 0.0;
    FiberFrame f = chart_frame(g, y);
    for (Vec2 x : samples) {
        PolarPoint p = polar_coordinates(g, f, x, opt);
        Sym2 G = g.eval(x).g;
        double len;
        if (fd <= 0.0) {
            len = std::sqrt(G.quad(p.grad));
        } else {
            auto rho = [&](Vec2 z) {
                if (g.is_flat()) return norm(z - y);
                return polar_coordinates(g, f, z, opt, p.r, p.beta).r;
            };
            Vec2 dr{(rho(x + Vec2{fd, 0}) - rho(x - Vec2{fd, 0})) / (2 * fd),
                    (rho(x + Vec2{0, fd}) - rho(x - Vec2{0, fd})) / (2 * fd)};
            len = std::sqrt(G.inverse().quad(dr));
        }
        worst = std::max(worst, std::abs(len - 1.0));
    }
    return worst;
}

}  // namespace geowave
