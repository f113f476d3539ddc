#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace geowave {

using Complex = std::complex<double>;
inline constexpr double pi = std::numbers::pi;

struct Vec2 {
    double x = 0.0, y = 0.0;

    double& operator[](int i) { return i == 0 ? x : y; }
    double operator[](int i) const { return i == 0 ? x : y; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
inline Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// symmetric 2x2 matrix
struct Sym2 {
    double xx = 0.0, xy = 0.0, yy = 0.0;

    double det() const { return xx * yy - xy * xy; }
    Sym2 inverse() const {
        double d = det();
        return {yy / d, -xy / d, xx / d};
    }
    Vec2 apply(Vec2 v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
    double quad(Vec2 u, Vec2 v) const { return dot(u, apply(v)); }
    double quad(Vec2 v) const { return quad(v, v); }
    double operator()(int i, int j) const {
        if (i != j) return xy;
        return i == 0 ? xx : yy;
    }
    Sym2& operator+=(const Sym2& o) { xx += o.xx; xy += o.xy; yy += o.yy; return *this; }
};

inline Sym2 operator*(double s, const Sym2& m) { return {s * m.xx, s * m.xy, s * m.yy}; }
inline Sym2 operator+(const Sym2& a, const Sym2& b) { return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy}; }
inline Sym2 operator-(const Sym2& a, const Sym2& b) { return {a.xx - b.xx, a.xy - b.xy, a.yy - b.yy}; }

// Serial reference or OpenMP kernel.
enum class Exec { serial, parallel };

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutOfDomain : Error {
    using Error::Error;
};
struct NonConvergence : Error {
    NonConvergence(const std::string& what, std::vector<double> history = {})
        : Error(what), residuals(std::move(history)) {}
    std::vector<double> residuals;
};
struct InvalidArgument : Error {
    using Error::Error;
};
struct GridTooCoarse : Error {
    using Error::Error;
};
struct Instability : Error {
    using Error::Error;
};
struct ExtractionOutOfRange : Error {
    using Error::Error;
};

}  // namespace geowave
