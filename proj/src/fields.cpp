#include "geowave/fields.hpp"

#include <algorithm>
#include <cstdio>

namespace geowave {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Constant final : public ScalarField {
public:
    explicit Constant(double c) : c_(c) {}
    double value(Vec2) const override { return c_; }
    std::string describe() const override { return "const(" + num(c_) + ")"; }

private:
    double c_;
};

class Bump final : public ScalarField {
public:
    Bump(Vec2 c, double r, double a) : c_(c), r_(r), a_(a) {}
    double value(Vec2 x) const override {
        Vec2 d = x - c_;
        double s2 = dot(d, d) / (r_ * r_);
        if (s2 >= 1.0) return 0.0;
        return a_ * std::exp(1.0 - 1.0 / (1.0 - s2));
    }
    std::string describe() const override {
        return "bump(" + num(c_.x) + "," + num(c_.y) + "," + num(r_) + "," + num(a_) + ")";
    }

private:
    Vec2 c_;
    double r_, a_;
};

class Gaussian final : public ScalarField {
public:
    Gaussian(Vec2 c, double s, double a) : c_(c), s_(s), a_(a) {}
    double value(Vec2 x) const override {
        Vec2 d = x - c_;
        return a_ * std::exp(-dot(d, d) / (2.0 * s_ * s_));
    }
    std::string describe() const override {
        return "gaussian(" + num(c_.x) + "," + num(c_.y) + "," + num(s_) + "," + num(a_) + ")";
    }

private:
    Vec2 c_;
    double s_, a_;
};

class Paraboloid final : public ScalarField {
public:
    double value(Vec2 x) const override { return 1.0 - dot(x, x); }
    std::string describe() const override { return "paraboloid"; }
};

class Sum final : public ScalarField {
public:
    Sum(Field a, Field b) : a_(std::move(a)), b_(std::move(b)) {}
    double value(Vec2 x) const override { return a_(x) + b_(x); }
    std::string describe() const override { return "sum(" + a_.describe() + "," + b_.describe() + ")"; }

private:
    Field a_, b_;
};

class Scaled final : public ScalarField {
public:
    Scaled(Field a, double s) : a_(std::move(a)), s_(s) {}
    double value(Vec2 x) const override { return s_ * a_(x); }
    std::string describe() const override { return "scaled(" + a_.describe() + "," + num(s_) + ")"; }

private:
    Field a_;
    double s_;
};

class Restricted final : public ScalarField {
public:
    Restricted(Field a, Disk d) : a_(std::move(a)), d_(d) {}
    double value(Vec2 x) const override { return d_.level(x) < 0.0 ? a_(x) : 0.0; }
    std::string describe() const override {
        return "restricted(" + a_.describe() + "," + num(d_.center.x) + "," + num(d_.center.y) + "," +
               num(d_.radius) + ")";
    }

private:
    Field a_;
    Disk d_;
};

class BandLimited final : public ScalarField {
public:
    BandLimited(std::uint64_t seed, int kmax, Disk d) : seed_(seed), kmax_(kmax), d_(d) {
        Rng rng(seed);
        for (int i = -kmax; i <= kmax; ++i)
            for (int j = 0; j <= kmax; ++j) {
                if (j == 0 && i < 0) continue;
                if (i * i + j * j > kmax * kmax) continue;
                double amp = rng.uniform(-1.0, 1.0) / (1.0 + i * i + j * j);
                double phase = rng.uniform(0.0, 2.0 * pi);
                modes_.push_back({double(i), double(j), amp, phase});
            }
    }
    double value(Vec2 x) const override {
        Vec2 q = (x - d_.center) / d_.radius;
        double r2 = dot(q, q);
        if (r2 >= 1.0) return 0.0;
        double w = (1.0 - r2) * (1.0 - r2);
        double s = 0.0;
        for (const auto& m : modes_) s += m.amp * std::cos(pi * (m.kx * q.x + m.ky * q.y) + m.phase);
        return w * s;
    }
    std::string describe() const override {
        return "band_limited(" + std::to_string(seed_) + "," + std::to_string(kmax_) + ")";
    }

private:
    struct Mode {
        double kx, ky, amp, phase;
    };
    std::uint64_t seed_;
    int kmax_;
    Disk d_;
    std::vector<Mode> modes_;
};

}  // namespace

Field::Field() : f_(std::make_shared<Constant>(0.0)) {}

Field zero_field() { return Field(std::make_shared<Constant>(0.0)); }
Field constant_field(double c) { return Field(std::make_shared<Constant>(c)); }
Field bump_field(Vec2 center, double radius, double amplitude) {
    if (radius <= 0.0) throw InvalidArgument("bump radius must be positive");
    return Field(std::make_shared<Bump>(center, radius, amplitude));
}
Field gaussian_field(Vec2 center, double sigma, double amplitude) {
    if (sigma <= 0.0) throw InvalidArgument("gaussian width must be positive");
    return Field(std::make_shared<Gaussian>(center, sigma, amplitude));
}
Field paraboloid_field() { return Field(std::make_shared<Paraboloid>()); }
Field sum(const Field& a, const Field& b) { return Field(std::make_shared<Sum>(a, b)); }
Field scaled(const Field& a, double s) { return Field(std::make_shared<Scaled>(a, s)); }
Field restricted(const Field& a, const Disk& d) { return Field(std::make_shared<Restricted>(a, d)); }
Field band_limited_phantom(std::uint64_t seed, int kmax, const Disk& d) {
    return Field(std::make_shared<BandLimited>(seed, kmax, d));
}

AdmissibilityReport check_admissible(const CoefficientField& c, const Manifold& m, double margin, int n) {
    AdmissibilityReport r;
    const Disk& o = m.outer();
    const Disk& in = m.inner();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Vec2 x = o.center + o.radius * Vec2{-1.0 + 2.0 * (i + 0.5) / n, -1.0 + 2.0 * (j + 0.5) / n};
            if (o.level(x) > 0.0) continue;
            double v = std::abs(c(x));
            r.max_abs = std::max(r.max_abs, v);
            if (in.level(x) > -margin) r.max_outside = std::max(r.max_outside, v);
        }
    r.bounded = r.max_abs <= c.bound;
    r.vanishes_near_boundary = r.max_outside == 0.0;
    return r;
}

double l2_distance(const Field& f, const Field& g, const Manifold& m, int n) {
    const Disk& d = m.inner();
    double h = 2.0 * d.radius / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Vec2 x = d.center + Vec2{-d.radius + (i + 0.5) * h, -d.radius + (j + 0.5) * h};
            if (d.level(x) >= 0.0) continue;
            double v = f(x) - g(x);
            s += v * v * m.metric().eval(x).sqrt_det;
        }
    return std::sqrt(s * h * h);
}

double l2_norm(const Field& f, const Manifold& m, int n) { return l2_distance(f, zero_field(), m, n); }

}  // namespace geowave
