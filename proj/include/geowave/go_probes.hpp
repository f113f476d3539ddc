#pragma once

#include <functional>
#include <string>
#include <vector>

#include "geowave/geodesics.hpp"
#include "geowave/wavesim.hpp"

namespace geowave {

// chi(t) = e^4 exp(-1/(s(1-s))), s = t/eps, on (0, eps); peak value 1 at eps/2
class Cutoff {
public:
    explicit Cutoff(double eps);
    double eps() const { return eps_; }
    double operator()(double t) const;
    double derivative(double t) const;
    // int chi^2 dt by adaptive Gauss-Kronrod
    double l2_squared() const { return l2sq_; }
    // composite trapezoid with n panels, for cross-checking
    double l2_squared_trapezoid(int n) const;

private:
    double eps_, l2sq_;
};

// Weight Psi on the inward half fiber S_y^+ M1, as a function of beta in (-pi/2, pi/2)
// (beta is the angle from the inward normal). Zero outside.
struct FiberWeight {
    std::function<double(double)> f;
    std::string key;
    double operator()(double beta) const {
        return (beta <= -0.5 * pi || beta >= 0.5 * pi) ? 0.0 : f(beta);
    }
};

FiberWeight uniform_weight();
FiberWeight zero_weight();
// smooth bump exp(1 - 1/(1 - s^2)), s = (beta - center)/half_width
FiberWeight sector_weight(double center, double half_width);

// Numerical dispersion of the leapfrog scheme on a grid with spacing dx and step dt.
// A plane wave of frequency omega and g-unit covector direction p travels with
// wavenumber n_phase * omega and envelope speed 1 / n_group.
struct GridDispersion {
    double dx = 0.0, dt = 0.0;  // dx = 0 switches the model off

    struct Index {
        double phase = 1.0, group = 1.0;
    };
    bool active() const { return dx > 0.0; }
    Index index(const Sym2& ginv, Vec2 p, double omega) const;
    std::string key() const;
};

GridDispersion grid_dispersion(const WaveGrid& grid);

struct ProbeSpec {
    double y_angle = pi;  // base point on dM1
    double h = 0.05;
    double eps = 0.2;
    FiberWeight weight = uniform_weight();
    Field a = zero_field();  // attenuation coefficient carried by psi
    int sign = +1;           // psi_{+a} forward, psi_{-a} backward
    GridDispersion dispersion{};
    double h_max = 0.5;
    double ray_step = 0.0;  // 0 uses the manifold default
    ShootOptions shoot{};
};

// Geometric-optics probe u ~ theta psi e^{i phi/h} launched from y in dM1,
// phi = rho - t, theta = alpha^{-1/4} chi(t - rho) Psi(beta).
class Probe {
public:
    Probe(const Manifold& m, ProbeSpec spec);

    // polar data of x about y, with ray integrals used by the attenuation and
    // the dispersion correction
    struct Local {
        Vec2 x;
        double r = 0.0, beta = 0.0, alpha = 1.0;
        double A = 0.0;       // int_0^r a along the ray
        double dphase = 0.0;  // int (n_phase - 1) over the part of the ray inside M
        double dgroup = 0.0;  // same with n_group
    };

    Local locate(Vec2 x) const;
    // locate a batch; neighbouring points seed each other's shooting
    std::vector<Local> locate(std::span<const Vec2> xs) const;

    double phase(Vec2 x, double t) const;
    double amplitude(Vec2 x, double t) const;
    double amplitude(const Local& p, double t) const;
    // psi_{sign a}(t, y, r, xi) = exp(-sign/2 int_{max(r-t,0)}^r a)
    double attenuation(Vec2 x, double t) const;
    // theta psi e^{i phi / h}, using psi = exp(-sign A/2) (exact on the support of chi)
    Complex ansatz(const Local& p, double t) const;
    Complex ansatz(Vec2 x, double t) const { return ansatz(locate(x), t); }

    DataPtr boundary_data() const;

    Vec2 y() const { return frame_.y; }
    const FiberFrame& frame() const { return frame_; }
    const Cutoff& cutoff() const { return chi_; }
    const ProbeSpec& spec() const { return spec_; }
    const Manifold& manifold() const { return m_; }
    std::string key() const;

private:
    // integral of a over the ray segment tau in [t0, t1] in direction beta
    double segment_integral(double beta, double t0, double t1) const;
    void ray_integrals(Local& p) const;

    Manifold m_;
    ProbeSpec spec_;
    FiberFrame frame_;
    Cutoff chi_;
    double step_;
};

// f_h (Psi = 1, psi_{a}) and the companion g_h (weight Psi, psi = 1)
struct ProbeTraces {
    DataPtr f, g;
    bool vanishes_at_zero = true;  // f_h(., 0) = 0 on the trace points
};

// refuses grids with fewer than 8 points per wavelength 2 pi h in the interior or along dM
void check_resolution(const WaveGrid& grid, double h);

ProbeTraces probe_traces(const Manifold& m, const ProbeSpec& spec, const WaveGrid& grid);

// max over samples of |d_t theta + <d rho, d theta>_g + 1/2 Delta_g rho theta|, all
// derivatives by centered differences with step fd (space and time)
double transport_residual(const Probe& p, std::span<const Vec2> samples, double t, double fd);
// max over samples of |d_t psi + <d rho, d psi>_g + sign/2 a psi|
double attenuation_residual(const Probe& p, std::span<const Vec2> samples, double t, double fd);

struct RemainderOptions {
    std::vector<double> hs = {0.1, 0.05, 0.025};
    WaveConfig wave{};
    int samples = 8;          // evaluation times spread over (0, T]
    bool richardson = false;  // extrapolate from cells and 2 cells with matched steps
};

struct RemainderReport {
    std::vector<double> hs;
    std::vector<double> norms;         // max_t |u - theta psi e^{i phi/h}|_{L2(M)}
    std::vector<double> ansatz_norms;  // max_t |theta psi|_{L2(M)}
    std::vector<double> ratios;        // norms[k+1] / norms[k]
    double slope = 0.0;                // least-squares log-log exponent
};

RemainderReport remainder_norm(const Manifold& m, const ProbeSpec& spec, const Coefficients& c,
                               const RemainderOptions& opt);

}  // namespace geowave
