#include "geowave/manifold.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "geowave/geodesics.hpp"

namespace geowave {

namespace {

std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Euclidean final : public MetricFamily {
public:
    MetricJet jet(Vec2) const override {
        MetricJet j;
        j.g = {1.0, 0.0, 1.0};
        return j;
    }
    void first_order(Vec2, Sym2& g, Sym2 dg[2]) const override {
        g = {1.0, 0.0, 1.0};
        dg[0] = dg[1] = {};
    }
    std::string describe() const override { return "euclidean"; }
    bool flat() const override { return true; }
};

struct ScalarJet {
    double v = 0.0;
    Vec2 d;
    Sym2 h;
};

// g = e^{2 lambda} delta
class Conformal : public MetricFamily {
public:
    virtual ScalarJet lambda(Vec2 x) const = 0;

    MetricJet jet(Vec2 x) const override {
        ScalarJet l = lambda(x);
        double e = std::exp(2.0 * l.v);
        MetricJet j;
        j.g = {e, 0.0, e};
        for (int k = 0; k < 2; ++k) {
            double s = 2.0 * l.d[k] * e;
            j.dg[k] = {s, 0.0, s};
            for (int m = 0; m < 2; ++m) {
                double s2 = (4.0 * l.d[k] * l.d[m] + 2.0 * l.h(k, m)) * e;
                j.d2g[k][m] = {s2, 0.0, s2};
            }
        }
        return j;
    }
    void first_order(Vec2 x, Sym2& g, Sym2 dg[2]) const override {
        ScalarJet l = lambda(x);
        double e = std::exp(2.0 * l.v);
        g = {e, 0.0, e};
        for (int k = 0; k < 2; ++k) {
            double s = 2.0 * l.d[k] * e;
            dg[k] = {s, 0.0, s};
        }
    }
};

class ConformalLinear final : public Conformal {
public:
    explicit ConformalLinear(double c) : c_(c) {}
    ScalarJet lambda(Vec2 x) const override { return {c_ * x.x, {c_, 0.0}, {}}; }
    std::string describe() const override { return "conformal_linear(c=" + fmt_num(c_) + ")"; }

private:
    double c_;
};

class ConstantCurvature final : public Conformal {
public:
    explicit ConstantCurvature(double K) : K_(K) {}
    ScalarJet lambda(Vec2 x) const override {
        double w = 1.0 + K_ * dot(x, x);
        ScalarJet l;
        l.v = std::log(2.0) - std::log(w);
        l.d = {-2.0 * K_ * x.x / w, -2.0 * K_ * x.y / w};
        double w2 = w * w;
        l.h = {-2.0 * K_ / w + 4.0 * K_ * K_ * x.x * x.x / w2, 4.0 * K_ * K_ * x.x * x.y / w2,
               -2.0 * K_ / w + 4.0 * K_ * K_ * x.y * x.y / w2};
        return l;
    }
    std::string describe() const override { return "constant_curvature(K=" + fmt_num(K_) + ")"; }
    bool defined_at(Vec2 x) const override { return 1.0 + K_ * dot(x, x) > 1e-3; }

private:
    double K_;
};

class SoundSpeed final : public Conformal {
public:
    SoundSpeed(double amp, Vec2 c, double w) : amp_(amp), c_(c), w_(w) {}
    ScalarJet lambda(Vec2 x) const override {
        Vec2 d = x - c_;
        double w2 = w_ * w_;
        double E = amp_ * std::exp(-dot(d, d) / w2);
        double c = 1.0 + E;
        Vec2 dc = {-2.0 * E * d.x / w2, -2.0 * E * d.y / w2};
        Sym2 hc = {E * (4.0 * d.x * d.x / (w2 * w2) - 2.0 / w2), E * 4.0 * d.x * d.y / (w2 * w2),
                   E * (4.0 * d.y * d.y / (w2 * w2) - 2.0 / w2)};
        ScalarJet l;
        l.v = -std::log(c);
        l.d = {-dc.x / c, -dc.y / c};
        l.h = {-hc.xx / c + dc.x * dc.x / (c * c), -hc.xy / c + dc.x * dc.y / (c * c),
               -hc.yy / c + dc.y * dc.y / (c * c)};
        return l;
    }
    std::string describe() const override {
        return "sound_speed(amp=" + fmt_num(amp_) + ",cx=" + fmt_num(c_.x) + ",cy=" + fmt_num(c_.y) +
               ",width=" + fmt_num(w_) + ")";
    }

private:
    double amp_;
    Vec2 c_;
    double w_;
};

class Polynomial final : public MetricFamily {
public:
    explicit Polynomial(double eps) : e_(eps) {}
    MetricJet jet(Vec2 p) const override {
        double x = p.x, y = p.y;
        MetricJet j;
        j.g = {1.0 + e_ * y * y, 0.5 * e_ * x * y, 1.0 + e_ * x * x};
        j.dg[0] = {0.0, 0.5 * e_ * y, 2.0 * e_ * x};
        j.dg[1] = {2.0 * e_ * y, 0.5 * e_ * x, 0.0};
        j.d2g[0][0] = {0.0, 0.0, 2.0 * e_};
        j.d2g[0][1] = j.d2g[1][0] = {0.0, 0.5 * e_, 0.0};
        j.d2g[1][1] = {2.0 * e_, 0.0, 0.0};
        return j;
    }
    std::string describe() const override { return "polynomial(eps=" + fmt_num(e_) + ")"; }

private:
    double e_;
};

class Polar final : public MetricFamily {
public:
    MetricJet jet(Vec2 p) const override {
        MetricJet j;
        j.g = {1.0, 0.0, p.x * p.x};
        j.dg[0] = {0.0, 0.0, 2.0 * p.x};
        j.d2g[0][0] = {0.0, 0.0, 2.0};
        return j;
    }
    std::string describe() const override { return "polar"; }
    bool defined_at(Vec2 p) const override { return p.x > 0.0; }
};

}  // namespace

void MetricFamily::first_order(Vec2 x, Sym2& g, Sym2 dg[2]) const {
    MetricJet j = jet(x);
    g = j.g;
    dg[0] = j.dg[0];
    dg[1] = j.dg[1];
}

MetricField::MetricField(std::shared_ptr<const MetricFamily> family, ChartBounds chart)
    : family_(std::move(family)), chart_(chart) {
    if (!family_) throw InvalidArgument("metric family is null");
    if (!(chart_.xmin < chart_.xmax && chart_.ymin < chart_.ymax)) throw InvalidArgument("empty chart");
}

bool MetricField::contains(Vec2 x) const { return chart_.contains(x) && family_->defined_at(x); }

void MetricField::check(Vec2 x) const {
    if (!contains(x))
        throw OutOfDomain("point (" + fmt_num(x.x) + ", " + fmt_num(x.y) + ") outside the chart of " + describe());
}

MetricSample MetricField::eval(Vec2 x) const {
    check(x);
    MetricSample s;
    family_->first_order(x, s.g, s.dg);
    s.ginv = s.g.inverse();
    s.sqrt_det = std::sqrt(s.g.det());
    return s;
}

MetricJet MetricField::jet(Vec2 x) const {
    check(x);
    return family_->jet(x);
}

Sym2 MetricField::g_at(Vec2 x) const {
    Sym2 g, dg[2];
    family_->first_order(x, g, dg);
    return g;
}

namespace {

// Gamma^k_ij from g^{-1} and first derivatives
Christoffel christoffel_from(const Sym2& ginv, const Sym2 dg[2]) {
    Christoffel c;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = i; j < 2; ++j) {
                double s = 0.0;
                for (int l = 0; l < 2; ++l)
                    s += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
                c.gamma[k][i][j] = c.gamma[k][j][i] = 0.5 * s;
            }
    return c;
}

}  // namespace

void MetricField::geodesic_accel(Vec2 x, Vec2 v, Vec2& acc) const {
    Sym2 g, dg[2];
    family_->first_order(x, g, dg);
    Christoffel c = christoffel_from(g.inverse(), dg);
    for (int k = 0; k < 2; ++k) {
        const auto& G = c.gamma[k];
        acc[k] = -(G[0][0] * v.x * v.x + 2.0 * G[0][1] * v.x * v.y + G[1][1] * v.y * v.y);
    }
}

Christoffel MetricField::christoffel(Vec2 x) const {
    MetricSample s = eval(x);
    return christoffel_from(s.ginv, s.dg);
}

double MetricField::gaussian_curvature(Vec2 x) const {
    MetricJet J = jet(x);
    Sym2 gi = J.g.inverse();
    Christoffel c = christoffel_from(gi, J.dg);
    // d_m Gamma^k_ij
    double dG[2][2][2][2];
    for (int m = 0; m < 2; ++m) {
        // d_m g^{-1} = -g^{-1} (d_m g) g^{-1}
        double dgi[2][2];
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                double s = 0.0;
                for (int p = 0; p < 2; ++p)
                    for (int q = 0; q < 2; ++q) s -= gi(a, p) * J.dg[m](p, q) * gi(q, b);
                dgi[a][b] = s;
            }
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < 2; ++l) {
                        double S = J.dg[i](l, j) + J.dg[j](l, i) - J.dg[l](i, j);
                        double dS = J.d2g[m][i](l, j) + J.d2g[m][j](l, i) - J.d2g[m][l](i, j);
                        s += dgi[k][l] * S + gi(k, l) * dS;
                    }
                    dG[m][k][i][j] = 0.5 * s;
                }
    }
    // R^l_{212} = d1 G^l_22 - d2 G^l_12 + G^l_1m G^m_22 - G^l_2m G^m_12
    double R[2];
    for (int l = 0; l < 2; ++l) {
        double s = dG[0][l][1][1] - dG[1][l][0][1];
        for (int m = 0; m < 2; ++m) s += c.gamma[l][0][m] * c.gamma[m][1][1] - c.gamma[l][1][m] * c.gamma[m][0][1];
        R[l] = s;
    }
    double R1212 = J.g(0, 0) * R[0] + J.g(0, 1) * R[1];
    return R1212 / J.g.det();
}

std::string MetricField::describe() const {
    return family_->describe() + "[" + fmt_num(chart_.xmin) + "," + fmt_num(chart_.xmax) + "]x[" +
           fmt_num(chart_.ymin) + "," + fmt_num(chart_.ymax) + "]";
}

MetricField euclidean_metric(ChartBounds chart) { return {std::make_shared<Euclidean>(), chart}; }
MetricField conformal_linear_metric(double c, ChartBounds chart) {
    return {std::make_shared<ConformalLinear>(c), chart};
}
MetricField constant_curvature_metric(double K, ChartBounds chart) {
    return {std::make_shared<ConstantCurvature>(K), chart};
}
MetricField sound_speed_metric(double amp, Vec2 center, double width, ChartBounds chart) {
    if (width <= 0.0) throw InvalidArgument("sound speed width must be positive");
    if (amp <= -1.0) throw InvalidArgument("sound speed amplitude must exceed -1");
    return {std::make_shared<SoundSpeed>(amp, center, width), chart};
}
MetricField polynomial_metric(double eps, ChartBounds chart) {
    if (eps < 0.0) throw InvalidArgument("polynomial perturbation must be nonnegative");
    return {std::make_shared<Polynomial>(eps), chart};
}
MetricField polar_metric(ChartBounds chart) { return {std::make_shared<Polar>(), chart}; }

Vec2 Disk::grad(Vec2 x) const {
    Vec2 d = x - center;
    double r = norm(d);
    return d / r;
}

Sym2 Disk::hess(Vec2 x) const {
    Vec2 d = x - center;
    double r = norm(d);
    Vec2 n = d / r;
    return {(1.0 - n.x * n.x) / r, -n.x * n.y / r, (1.0 - n.y * n.y) / r};
}

Vec2 Disk::project(Vec2 x) const {
    Vec2 d = x - center;
    double r = norm(d);
    if (r == 0.0) return center + Vec2{radius, 0.0};
    return center + (radius / r) * d;
}

Manifold::Manifold(MetricField metric, Disk inner, Disk outer)
    : metric_(std::move(metric)), inner_(inner), outer_(outer) {
    if (inner_.radius <= 0.0 || outer_.radius <= 0.0) throw InvalidArgument("disk radii must be positive");
    if (margin() <= 0.0) throw InvalidArgument("M must lie in the interior of M1 with a positive margin");
    for (int k = 0; k < 64; ++k) {
        Vec2 p = outer_.point(2.0 * pi * k / 64.0);
        Vec2 q = outer_.center + 1.05 * (p - outer_.center);
        if (!metric_.contains(q)) throw InvalidArgument("chart does not contain M1 with a margin");
    }
}

double Manifold::margin() const { return outer_.radius - norm(inner_.center - outer_.center) - inner_.radius; }

Vec2 Manifold::normal(const Disk& d, Vec2 x) const {
    Sym2 gi = metric_.eval(x).ginv;
    Vec2 n = d.grad(x);
    Vec2 v = gi.apply(n);
    return v / std::sqrt(dot(n, v));
}

Vec2 Manifold::tangent(const Disk& d, Vec2 x) const {
    Sym2 g = metric_.eval(x).g;
    Vec2 n = d.grad(x);
    Vec2 t{-n.y, n.x};
    return t / std::sqrt(g.quad(t));
}

FiberFrame Manifold::boundary_frame(const Disk& d, double angle) const {
    Vec2 y = d.point(angle);
    return {y, -normal(d, y), tangent(d, y)};
}

double Manifold::boundary_speed(const Disk& d, double angle) const {
    Vec2 y = d.point(angle);
    Vec2 t = d.radius * Vec2{-std::sin(angle), std::cos(angle)};
    return std::sqrt(metric_.eval(y).g.quad(t));
}

double Manifold::default_step() const {
    // g-length of a straight chart diameter of M1, 64-point midpoint rule
    double len = 0.0;
    const int n = 64;
    Vec2 a = outer_.point(pi), b = outer_.point(0.0);
    for (int k = 0; k < n; ++k) {
        Vec2 p = a + ((k + 0.5) / n) * (b - a);
        len += std::sqrt(metric_.eval(p).g.quad(b - a)) / n;
    }
    return len / 256.0;
}

double Manifold::diameter(int points, int angles) const {
    double step = default_step();
    double best = 0.0;
    for (int i = 0; i < points; ++i) {
        double ang = 2.0 * pi * i / points;
        FiberFrame f = boundary_frame(outer_, ang);
        for (int k = 0; k < angles; ++k) {
            double beta = -0.5 * pi + pi * (k + 0.5) / angles;
            best = std::max(best, exit_time(metric_, {f.y, f.direction(beta)}, outer_, step).time);
        }
    }
    return best;
}

std::string Manifold::describe() const {
    return metric_.describe() + ";M=disk(" + fmt_num(inner_.center.x) + "," + fmt_num(inner_.center.y) + "," +
           fmt_num(inner_.radius) + ");M1=disk(" + fmt_num(outer_.center.x) + "," + fmt_num(outer_.center.y) + "," +
           fmt_num(outer_.radius) + ")";
}

double second_fundamental_form(const Manifold& m, const Disk& d, double angle) {
    Vec2 x = d.point(angle);
    const MetricField& g = m.metric();
    MetricSample s = g.eval(x);
    Christoffel c = g.christoffel(x);
    Vec2 dphi = d.grad(x);
    Sym2 H = d.hess(x);
    Vec2 T = m.tangent(d, x);
    double hess_tt = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double hij = H(i, j) - (c.gamma[0][i][j] * dphi.x + c.gamma[1][i][j] * dphi.y);
            hess_tt += hij * T[i] * T[j];
        }
    return hess_tt / std::sqrt(s.ginv.quad(dphi));
}

namespace {

double ray_k_plus(const MetricField& g, const TracedRay& ray) {
    double acc = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < ray.samples.size(); ++i) {
        const auto& s = ray.samples[i];
        double f = s.t * std::max(0.0, g.gaussian_curvature(s.s.x));
        if (i > 0) acc += 0.5 * (f + prev) * (s.t - ray.samples[i - 1].t);
        prev = f;
    }
    return acc;
}

}  // namespace

double k_plus(const Manifold& m, const Disk& boundary, FanSpec fan, double step) {
    if (step <= 0.0) step = m.default_step();
    double best = 0.0;
    for (int i = 0; i < fan.points; ++i) {
        FiberFrame f = m.boundary_frame(boundary, 2.0 * pi * i / fan.points);
        for (int k = 0; k < fan.angles; ++k) {
            double beta = -0.5 * pi + pi * (k + 0.5) / fan.angles;
            TracedRay r = trace_to_exit(m.metric(), {f.y, f.direction(beta)}, boundary, {step, false});
            best = std::max(best, ray_k_plus(m.metric(), r));
        }
    }
    return best;
}

CurvatureReport curvature(const Manifold& m, std::span<const Vec2> samples, FanSpec fan, double step) {
    CurvatureReport rep;
    for (Vec2 x : samples) {
        double K = m.metric().gaussian_curvature(x);
        rep.K.push_back(K);
        rep.K_plus.push_back(std::max(0.0, K));
    }
    SimplicityVerdict v = check_simple(m, fan, 64, step);
    rep.k_plus = v.k_plus;
    rep.fan_rays = v.fan_rays;
    rep.convexity_margin = v.convexity_margin;
    rep.conjugate_point = !v.conjugate_free;
    return rep;
}

SimplicityVerdict check_simple(const Manifold& m, FanSpec fan, int boundary_samples, double step) {
    if (step <= 0.0) step = m.default_step();
    const Disk& b = m.outer();
    SimplicityVerdict v;
    v.convexity_margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < boundary_samples; ++i) {
        double ang = 2.0 * pi * i / boundary_samples;
        double II = second_fundamental_form(m, b, ang);
        if (II < v.convexity_margin) v.convexity_margin = II;
        if (II <= 0.0 && !v.witness) {
            FiberFrame f = m.boundary_frame(b, ang);
            v.witness = WitnessRay{f.y, f.e2, 0.0, "non-convex boundary"};
        }
    }
    v.convex = v.convexity_margin > 0.0;

    v.conjugate_free = true;
    for (int i = 0; i < fan.points; ++i) {
        FiberFrame f = m.boundary_frame(b, 2.0 * pi * i / fan.points);
        for (int k = 0; k < fan.angles; ++k) {
            double beta = -0.5 * pi + pi * (k + 0.5) / fan.angles;
            Vec2 xi = f.direction(beta);
            TracedRay r = trace_to_exit(m.metric(), {f.y, xi}, b, {step, true});
            ++v.fan_rays;
            v.k_plus = std::max(v.k_plus, ray_k_plus(m.metric(), r));
            for (std::size_t s = 1; s < r.samples.size(); ++s) {
                if (r.samples[s].s.j <= 0.0) {
                    if (v.conjugate_free && (!v.witness || v.witness->kind != "conjugate point"))
                        v.witness = WitnessRay{f.y, xi, r.samples[s].t, "conjugate point"};
                    v.conjugate_free = false;
                    break;
                }
            }
        }
    }
    v.k_plus_below_one = v.k_plus < 1.0;
    v.simple = v.convex && v.conjugate_free && v.k_plus_below_one;
    return v;
}

}  // namespace geowave
