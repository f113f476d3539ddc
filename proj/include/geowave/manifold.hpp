#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geowave/core.hpp"

namespace geowave {

// Metric with first and second partial derivatives at one point.
// dg[k] = d_k g, d2g[k][l] = d_k d_l g.
struct MetricJet {
    Sym2 g;
    Sym2 dg[2];
    Sym2 d2g[2][2];
};

struct MetricSample {
    Sym2 g, ginv;
    double sqrt_det = 1.0;
    Sym2 dg[2];
};

// gamma[k][i][j] = Gamma^k_{ij}
struct Christoffel {
    double gamma[2][2][2] = {};
};

class MetricFamily {
public:
    virtual ~MetricFamily() = default;
    virtual MetricJet jet(Vec2 x) const = 0;
    // g and first derivatives only; defaults to the full jet
    virtual void first_order(Vec2 x, Sym2& g, Sym2 dg[2]) const;
    // canonical "family(param=...)" string, used for content hashing
    virtual std::string describe() const = 0;
    virtual bool flat() const { return false; }
    // points where the closed form itself breaks down
    virtual bool defined_at(Vec2) const { return true; }
};

struct ChartBounds {
    double xmin = -2.0, xmax = 2.0, ymin = -2.0, ymax = 2.0;
    bool contains(Vec2 p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
};

class MetricField {
public:
    MetricField(std::shared_ptr<const MetricFamily> family, ChartBounds chart);

    MetricSample eval(Vec2 x) const;
    MetricJet jet(Vec2 x) const;
    Christoffel christoffel(Vec2 x) const;
    double gaussian_curvature(Vec2 x) const;

    // unchecked variants for inner loops (caller guarantees x in chart)
    Sym2 g_at(Vec2 x) const;
    void geodesic_accel(Vec2 x, Vec2 v, Vec2& acc) const;

    bool contains(Vec2 x) const;
    bool is_flat() const { return family_->flat(); }
    const ChartBounds& chart() const { return chart_; }
    std::string describe() const;

private:
    void check(Vec2 x) const;
    std::shared_ptr<const MetricFamily> family_;
    ChartBounds chart_;
};

// Metric families.
MetricField euclidean_metric(ChartBounds chart = {});
// e^{2 lambda} delta with lambda(x) = c * x^1
MetricField conformal_linear_metric(double c, ChartBounds chart = {});
// 4/(1 + K|x|^2)^2 delta: stereographic sphere (K>0) or hyperbolic disk (K<0) of curvature K
MetricField constant_curvature_metric(double K, ChartBounds chart = {});
// c(x)^{-2} delta with c = 1 + amp * exp(-|x - center|^2 / width^2)
MetricField sound_speed_metric(double amp, Vec2 center, double width, ChartBounds chart = {});
// delta + eps * [[x2^2, x1 x2 / 2], [x1 x2 / 2, x1^2]]
MetricField polynomial_metric(double eps, ChartBounds chart = {});
// dr^2 + r^2 dtheta^2 in coordinates (r, theta)
MetricField polar_metric(ChartBounds chart = {0.05, 10.0, -10.0, 10.0});

// Round level-set boundary: phi(x) = |x - center| - radius.
struct Disk {
    Vec2 center{};
    double radius = 1.0;

    double level(Vec2 x) const { return norm(x - center) - radius; }
    Vec2 grad(Vec2 x) const;
    Sym2 hess(Vec2 x) const;
    Vec2 point(double angle) const { return center + radius * Vec2{std::cos(angle), std::sin(angle)}; }
    double angle_of(Vec2 x) const { return std::atan2(x.y - center.y, x.x - center.x); }
    Vec2 project(Vec2 x) const;
};

// g-orthonormal frame of a fiber: direction(beta) = cos(beta) e1 + sin(beta) e2
struct FiberFrame {
    Vec2 y;
    Vec2 e1, e2;
    Vec2 direction(double beta) const { return std::cos(beta) * e1 + std::sin(beta) * e2; }
    // +1 when (e1, e2) is positively oriented in the chart
    double orientation() const { return cross(e1, e2) > 0 ? 1.0 : -1.0; }
};

// The pair M subset M1 of nested disks with a metric on a chart containing both.
class Manifold {
public:
    Manifold(MetricField metric, Disk inner, Disk outer);

    const MetricField& metric() const { return metric_; }
    const Disk& inner() const { return inner_; }
    const Disk& outer() const { return outer_; }

    // outward g-unit normal vector and ccw g-unit tangent at a boundary point
    Vec2 normal(const Disk& d, Vec2 x) const;
    Vec2 tangent(const Disk& d, Vec2 x) const;
    // frame at a boundary point with e1 = -nu (inward), e2 = tangent
    FiberFrame boundary_frame(const Disk& d, double angle) const;
    // g-length of the boundary curve derivative d point / d angle
    double boundary_speed(const Disk& d, double angle) const;
    // dist(M, outside of M1) lower bound in chart units
    double margin() const;
    // integrator step giving about 256 steps across the outer diameter
    double default_step() const;
    // longest geodesic chord of M1, estimated over a ray fan
    double diameter(int points = 48, int angles = 48) const;
    std::string describe() const;

private:
    MetricField metric_;
    Disk inner_, outer_;
};

struct CurvatureReport {
    std::vector<double> K;       // Gaussian curvature at the samples
    std::vector<double> K_plus;  // max(0, K)
    double k_plus = 0.0;         // lower bound for the sup over the fan
    int fan_rays = 0;
    double convexity_margin = 0.0;  // min second fundamental form of the boundary
    bool conjugate_point = false;
};

struct FanSpec {
    int points = 16;
    int angles = 16;
};

// k+ = sup over the fan of int_0^l+ t K+(gamma(t)) dt
double k_plus(const Manifold& m, const Disk& boundary, FanSpec fan, double step = 0.0);

CurvatureReport curvature(const Manifold& m, std::span<const Vec2> samples, FanSpec fan = {}, double step = 0.0);

// Second fundamental form Hess_g(phi)(T,T)/|d phi|_g of the boundary at angle.
double second_fundamental_form(const Manifold& m, const Disk& d, double angle);

struct WitnessRay {
    Vec2 y, xi;
    double t = 0.0;  // where the failure occurs
    std::string kind;
};

struct SimplicityVerdict {
    bool simple = false;
    bool convex = false;
    bool conjugate_free = false;
    bool k_plus_below_one = false;
    double convexity_margin = 0.0;
    double k_plus = 0.0;
    int fan_rays = 0;
    std::optional<WitnessRay> witness;
};

SimplicityVerdict check_simple(const Manifold& m, FanSpec fan = {}, int boundary_samples = 64, double step = 0.0);

}  // namespace geowave
