#pragma once

// Data-parallel kernels. Each has a plain serial reference and an OpenMP
// version; tests check they agree and bench/ times them against each other.

#include <span>
#include <vector>

#include "geowave/core.hpp"

namespace geowave {

class FanGrid;
class Field;

namespace kernels {

// out[k] = sum_j w_kj f(x_kj) over the stored ray quadrature
void ray_sums_serial(const FanGrid& fan, const Field& f, std::span<double> out);
void ray_sums_parallel(const FanGrid& fan, const Field& f, std::span<double> out);
inline void ray_sums(const FanGrid& fan, const Field& f, std::span<double> out, Exec e) {
    e == Exec::parallel ? ray_sums_parallel(fan, f, out) : ray_sums_serial(fan, f, out);
}

struct Csr {
    int rows = 0, cols = 0;
    std::vector<int> ptr, col;
    std::vector<double> val;

    Csr transpose() const;
};

void csr_matvec_serial(const Csr& a, std::span<const double> x, std::span<double> y);
void csr_matvec_parallel(const Csr& a, std::span<const double> x, std::span<double> y);
inline void csr_matvec(const Csr& a, std::span<const double> x, std::span<double> y, Exec e) {
    e == Exec::parallel ? csr_matvec_parallel(a, x, y) : csr_matvec_serial(a, x, y);
}

// One leapfrog update of the interior nodes (see wavesim.cpp for the stencil).
struct WaveStencil {
    int nx = 0, ny = 0;
    // per grid node: face coefficients sqrt|g| g^{11} at i+1/2, sqrt|g| g^{22} at j+1/2,
    // nodal sqrt|g| g^{12}, 1/sqrt|g|, damping and potential
    std::vector<double> ax, ay, bxy, inv_vol, damp, pot;
    std::vector<int> interior;  // node ids updated by the scheme
    double dt = 0.0, dx = 0.0;
    bool mixed = false;  // g12 != 0 somewhere
};

using cvec = std::vector<std::complex<double>>;

// u_next from u, u_prev and an optional nodal source (may be empty)
void wave_step_serial(const WaveStencil& s, const cvec& u, const cvec& u_prev, const cvec& src, cvec& u_next);
void wave_step_parallel(const WaveStencil& s, const cvec& u, const cvec& u_prev, const cvec& src, cvec& u_next);
inline void wave_step(const WaveStencil& s, const cvec& u, const cvec& u_prev, const cvec& src, cvec& u_next,
                      Exec e) {
    e == Exec::parallel ? wave_step_parallel(s, u, u_prev, src, u_next)
                        : wave_step_serial(s, u, u_prev, src, u_next);
}

}  // namespace kernels
}  // namespace geowave
