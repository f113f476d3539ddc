#pragma once

#include <vector>

#include "geowave/manifold.hpp"

namespace geowave {

struct PhasePoint {
    Vec2 x, xi;
};

// Geodesic state with the scalar Jacobi field j'' + K j = 0 carried along.
struct GeoState {
    Vec2 x, v;
    double j = 0.0, dj = 1.0;
};

GeoState rk4_step(const MetricField& g, const GeoState& s, double h, bool jacobi);

struct PathSample {
    double t = 0.0;
    GeoState s;
};

struct TracedRay {
    std::vector<PathSample> samples;  // t = 0, step, 2 step, ..., exit
    double exit = 0.0;
    bool grazing = false;
    double normal_speed = 0.0;  // |<gamma', nu>| at the exit point
};

struct TraceOptions {
    double step = 0.01;
    bool jacobi = false;
    double graze_tol = 1e-3;
};

// phi_t(x, xi) by fixed-step RK4 with steps no longer than step
PhasePoint flow(const MetricField& g, PhasePoint p, double t, double step);

// Traces until the geodesic leaves the disk. Starting on the boundary with
// an outward direction yields a single sample and exit time 0.
TracedRay trace_to_exit(const MetricField& g, PhasePoint p, const Disk& boundary, TraceOptions opt);

struct ExitResult {
    double time = 0.0;
    PhasePoint end;
    bool grazing = false;
};

ExitResult exit_time(const MetricField& g, PhasePoint p, const Disk& boundary, double step);
// l_-(x, xi) = -l_+(x, -xi)
double exit_time_backward(const MetricField& g, PhasePoint p, const Disk& boundary, double step);

Vec2 exp_map(const MetricField& g, Vec2 y, Vec2 v, double step);

// Geodesic polar coordinates of x about the frame base point.
struct PolarPoint {
    double r = 0.0;
    double beta = 0.0;   // initial direction = frame.direction(beta)
    double alpha = 0.0;  // squared polar volume factor j(r)^2
    Vec2 grad;           // grad rho at x (unit tangent vector)
    int iterations = 0;
    double residual = 0.0;
};

struct ShootOptions {
    double step = 0.01;
    double tol = 1e-11;
    int max_iter = 40;
};

PolarPoint polar_coordinates(const MetricField& g, const FiberFrame& frame, Vec2 x, ShootOptions opt);
// same, seeded with a known nearby solution
PolarPoint polar_coordinates(const MetricField& g, const FiberFrame& frame, Vec2 x, ShootOptions opt,
                             double r0, double beta0);

struct DistanceResult {
    double rho = 0.0;
    Vec2 grad;  // unit gradient vector of rho at x
    int iterations = 0;
    double residual = 0.0;
};

// rho(x) = d_g(y, x) by shooting from y; the flat metric uses the closed form
DistanceResult distance(const MetricField& g, Vec2 y, Vec2 x, ShootOptions opt = {});

// frame at y made by g-orthonormalizing the chart axes
FiberFrame chart_frame(const MetricField& g, Vec2 y);

// alpha(r, xi) = j(r)^2 from the scalar Jacobi equation
double polar_volume(const MetricField& g, Vec2 y, double r, Vec2 xi, double step);

// max over samples of | |grad rho|_g - 1 |, with grad rho by central
// differences (fd > 0) or taken from the shooting solution (fd = 0)
double eikonal_residual(const MetricField& g, Vec2 y, const std::vector<Vec2>& samples, double fd,
                        ShootOptions opt = {});

// g-unit normal to v, oriented like the frame
Vec2 unit_normal(const Sym2& g, Vec2 v, double orientation);

}  // namespace geowave
