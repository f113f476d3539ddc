#include "geowave/kernels.hpp"

#include "geowave/xray.hpp"

namespace geowave::kernels {

namespace {

inline double ray_sum(const BoundaryRay& r, const Field& f) {
    double s = 0.0;
    for (std::size_t q = 0; q < r.nodes.size(); ++q) s += r.weights[q] * f(r.nodes[q]);
    return s;
}

// divergence-form Laplace-Beltrami plus damping/potential at node k
inline std::complex<double> update(const WaveStencil& s, const cvec& u, const cvec& up, const cvec& src, int k) {
    const int nx = s.nx;
    const double idx2 = 1.0 / (s.dx * s.dx);
    std::complex<double> c = u[k];
    std::complex<double> lap = s.ax[k] * (u[k + 1] - c) - s.ax[k - 1] * (c - u[k - 1]) +
                               s.ay[k] * (u[k + nx] - c) - s.ay[k - nx] * (c - u[k - nx]);
    if (s.mixed) {
        lap += 0.25 * (s.bxy[k + 1] * (u[k + 1 + nx] - u[k + 1 - nx]) - s.bxy[k - 1] * (u[k - 1 + nx] - u[k - 1 - nx]) +
                       s.bxy[k + nx] * (u[k + nx + 1] - u[k + nx - 1]) - s.bxy[k - nx] * (u[k - nx + 1] - u[k - nx - 1]));
    }
    lap *= s.inv_vol[k] * idx2;
    std::complex<double> rhs = lap - s.pot[k] * c;
    if (!src.empty()) rhs += src[k];
    const double ad = 0.5 * s.damp[k] * s.dt;
    return (2.0 * c - (1.0 - ad) * up[k] + s.dt * s.dt * rhs) / (1.0 + ad);
}

}  // namespace

void ray_sums_serial(const FanGrid& fan, const Field& f, std::span<double> out) {
    for (std::size_t k = 0; k < fan.size(); ++k) out[k] = ray_sum(fan.ray(k), f);
}

void ray_sums_parallel(const FanGrid& fan, const Field& f, std::span<double> out) {
    const std::ptrdiff_t n = std::ptrdiff_t(fan.size());
#pragma omp parallel for schedule(dynamic, 32)
    for (std::ptrdiff_t k = 0; k < n; ++k) out[k] = ray_sum(fan.ray(std::size_t(k)), f);
}

Csr Csr::transpose() const {
    Csr t;
    t.rows = cols;
    t.cols = rows;
    t.ptr.assign(cols + 1, 0);
    for (int c : col) ++t.ptr[c + 1];
    for (int i = 0; i < cols; ++i) t.ptr[i + 1] += t.ptr[i];
    t.col.resize(col.size());
    t.val.resize(val.size());
    std::vector<int> fill(t.ptr.begin(), t.ptr.end() - 1);
    for (int r = 0; r < rows; ++r)
        for (int q = ptr[r]; q < ptr[r + 1]; ++q) {
            int dst = fill[col[q]]++;
            t.col[dst] = r;
            t.val[dst] = val[q];
        }
    return t;
}

void csr_matvec_serial(const Csr& a, std::span<const double> x, std::span<double> y) {
    for (int r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (int q = a.ptr[r]; q < a.ptr[r + 1]; ++q) s += a.val[q] * x[a.col[q]];
        y[r] = s;
    }
}

void csr_matvec_parallel(const Csr& a, std::span<const double> x, std::span<double> y) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (int q = a.ptr[r]; q < a.ptr[r + 1]; ++q) s += a.val[q] * x[a.col[q]];
        y[r] = s;
    }
}

void wave_step_serial(const WaveStencil& s, const cvec& u, const cvec& u_prev, const cvec& src, cvec& u_next) {
    for (int k : s.interior) u_next[k] = update(s, u, u_prev, src, k);
}

void wave_step_parallel(const WaveStencil& s, const cvec& u, const cvec& u_prev, const cvec& src, cvec& u_next) {
    const std::ptrdiff_t n = std::ptrdiff_t(s.interior.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t q = 0; q < n; ++q) {
        int k = s.interior[q];
        u_next[k] = update(s, u, u_prev, src, k);
    }
}

}  // namespace geowave::kernels
