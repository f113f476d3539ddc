#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "geowave/manifold.hpp"

namespace geowave {

class ScalarField {
public:
    virtual ~ScalarField() = default;
    virtual double value(Vec2 x) const = 0;
    virtual std::string describe() const = 0;
};

// Shared immutable scalar field on the chart.
class Field {
public:
    Field();
    explicit Field(std::shared_ptr<const ScalarField> f) : f_(std::move(f)) {}
    double operator()(Vec2 x) const { return f_->value(x); }
    std::string describe() const { return f_->describe(); }
    const ScalarField& impl() const { return *f_; }

private:
    std::shared_ptr<const ScalarField> f_;
};

Field zero_field();
Field constant_field(double c);
// amplitude * exp(1 - 1/(1 - s^2)), s = |x - center|/radius, zero for s >= 1
Field bump_field(Vec2 center, double radius, double amplitude);
Field gaussian_field(Vec2 center, double sigma, double amplitude);
// 1 - |x|^2
Field paraboloid_field();
Field sum(const Field& a, const Field& b);
Field scaled(const Field& a, double s);
// zero outside the disk
Field restricted(const Field& a, const Disk& d);
// window (1 - |x-c|^2/R^2)^2 times a random trigonometric sum with |k| <= kmax
Field band_limited_phantom(std::uint64_t seed, int kmax, const Disk& d);

// Absorption or potential coefficient with its admissibility data.
struct CoefficientField {
    Field field = zero_field();
    double bound = 1.0;  // m1 for absorption, m2 for potential
    double eta = 0.0;    // lower bound of a on the boundary layer (absorption only)
    double operator()(Vec2 x) const { return field(x); }
};

struct AdmissibilityReport {
    double max_abs = 0.0;
    double max_outside = 0.0;  // max |f| on M1 \ M or within the agreement margin of the boundary
    bool bounded = false;
    bool vanishes_near_boundary = false;
};

// sampled check of |f| <= bound and f = 0 outside the disk shrunk by margin
AdmissibilityReport check_admissible(const CoefficientField& c, const Manifold& m, double margin, int n = 200);

// L2(M) norm with the Riemannian volume, midpoint rule on an n x n box grid
double l2_norm(const Field& f, const Manifold& m, int n = 256);
double l2_distance(const Field& f, const Field& g, const Manifold& m, int n = 256);

// mt19937_64 with a fixed 53-bit conversion, so draws match across standard libraries
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return (gen_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

private:
    std::mt19937_64 gen_;
};

}  // namespace geowave
