#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "geowave/go_probes.hpp"
#include "geowave/xray.hpp"

namespace geowave {

// ---- Poisson kernel on the fiber circle ----

// Psi_kappa(theta, xi) = (1 - kappa^2) / (alpha_n |kappa theta - xi|^n), directions given by
// their beta angle in a g-orthonormal fiber frame
struct MollifierKernel {
    double theta = 0.0;
    double kappa = 0.5;
    int n = 2;
    double alpha_n = 2.0 * pi;  // length of the unit fiber circle

    double operator()(double xi) const;
    // 2 / (alpha_n (1 - kappa)^{n-1})
    double bound() const;
};

MollifierKernel make_kernel(double theta, double kappa);
double poisson_eval(const MollifierKernel& k, double xi);
// as a probe weight (restricted to the inward half fiber)
FiberWeight kernel_weight(const MollifierKernel& k);

// int Psi_kappa dw over the whole fiber by adaptive Gauss-Kronrod
double kernel_mass(const MollifierKernel& k);
// int Psi_kappa(theta, xi) |theta - xi| dw
double kernel_moment(const MollifierKernel& k);
// |Psi_kappa(theta, .)|^2_{H^2} with fiber derivatives by centered differences on m points
double kernel_h2_norm(const MollifierKernel& k, int m = 4096);

struct PoissonReport {
    std::vector<double> kappas;
    std::vector<double> mass_errors;       // |int Psi - 1|
    std::vector<double> max_over_bound;    // max Psi / bound on the (theta, xi) grid
    std::vector<double> moments;
    std::vector<double> moment_constants;  // moment / (1 - kappa)^{1/2n}
    std::vector<double> h2_norms;
    std::vector<double> h2_constants;      // |Psi|^2_{H^2} (1 - kappa)^{n+3}
    double max_mass_error = 0.0;
    bool bound_ok = true;
    double moment_constant = 0.0;  // smallest C with moment <= C (1 - kappa)^{1/2n} on the grid
    double moment_spread = 0.0;    // max / min - 1 of the moment constants
};

// grid x grid directions for theta and xi each
PoissonReport poisson_checks(const std::vector<double>& kappas, int grid = 100);

// 1 - kappa = h^{2n / (1 + 2n^2 + 6n)}
double kappa_rule(double h, int n = 2);

// ---- boundary pairings ----

struct PairingRecord {
    double y_angle = 0.0;
    double h = 0.0;
    std::string weight;
    Complex value;          // int int conj(g_h) (L_known - L_unknown) f_h
    double chi_l2 = 0.0;    // int chi^2
};

// Pairings of (L_known - L_unknown) f_h(y) against g_h(y, Psi) for many Psi at once.
// The known operator supplies psi_{a} of f_h; g_h carries psi = 1.
class PairingEngine {
public:
    PairingEngine(std::shared_ptr<const DtnOperator> known, std::shared_ptr<const DtnOperator> unknown,
                  ProbeSpec base, bool compensate_dispersion);

    PairingRecord pair(double y_angle, const FiberWeight& w) const;
    // (L_known - L_unknown) f_h(y)
    const BoundarySignal& difference(double y_angle) const;
    DataPtr forward_probe(double y_angle) const;
    double h() const { return base_.h; }
    double chi_l2() const { return chi_l2_; }
    const DtnOperator& known() const { return *known_; }
    const DtnOperator& unknown() const { return *unknown_; }

private:
    struct Profile {
        BoundarySignal diff;
        std::vector<double> beta;  // fiber angle of each trace point seen from y
        std::vector<Complex> c;    // dsigma * sum_t w_t conj(g_h^{Psi=1}) diff
    };
    const Profile& profile(double y_angle) const;
    ProbeSpec spec_at(double y_angle) const;

    std::shared_ptr<const DtnOperator> known_, unknown_;
    ProbeSpec base_;
    double chi_l2_;
    mutable std::mutex mu_;
    mutable std::map<double, std::shared_ptr<const Profile>> cache_;
};

PairingRecord boundary_pairing(const DtnOperator& known, const DtnOperator& unknown, const ProbeTraces& traces,
                               double y_angle, double h, double eps);

struct Estimate {
    Complex value;
    double error_bar = 0.0;
};

// (-h / (2 i int chi^2)) pairing, estimating int Psi (exp(-I(a)/2) - 1) dw when a_known = 0
Estimate extract_weighted_exp(const PairingEngine& e, double y_angle, const FiberWeight& w,
                              double remainder_constant = 1.0);
// -pairing / int chi^2, estimating int I(q_unknown - q_known) Psi dw
Estimate extract_weighted_ray_q(const PairingEngine& e, double y_angle, const FiberWeight& w, double a_hat_max,
                                double remainder_constant = 1.0);

struct PointwiseValue {
    double value = 0.0;       // I-hat
    Complex s;                // mollified estimate
    double error_bar = 0.0;   // remainder part
    double blur = 0.0;        // int Psi_kappa |theta - xi| dw
};

// -2 log(1 + Re S) with S from the Poisson kernel centered at theta
PointwiseValue pointwise_ray_absorption(const PairingEngine& e, double y_angle, double theta, double kappa,
                                        double remainder_constant = 1.0);

// ---- reconstruction ----

enum class RecoverMode { full, bypass };

struct RecoverOptions {
    int ns = 64, nb = 64;  // fan over dM1
    double h = 0.05;
    double eps = 0.6;
    double kappa = 0.0;  // 0 uses kappa_rule(h)
    bool compensate_dispersion = true;
    bool deblur = true;  // invert through the fiber mixing of the kernel
    InvertOptions invert{.lambda_reg = 1e-6};
    double max_failure_fraction = 0.1;
    double remainder_constant = 0.4;
    int fiber_quadrature = 1024;  // bypass: fiber points for the exact mollified values
    Exec exec = Exec::parallel;
};

struct StageResult {
    RayImage image;                // I-hat over the fan
    std::vector<Complex> raw;      // S (absorption) or -P / int chi^2 (potential) per fan node
    std::vector<double> error_bar; // per fan node
    std::vector<double> blur;      // per fan node
    std::vector<char> failed;
    int failures = 0;
    InversionResult inversion;
    double h = 0.0, kappa = 0.0;
};

struct ReconstructionResult {
    StageResult absorption, potential;
    Field a_hat, q_hat;
    std::map<std::string, std::string> schedule;
};

// fiber mixing W_jk = Psi_kappa(beta_j, beta_k) dbeta on the fan directions
FiberMixing kernel_mixing(const FanGrid& fan, double kappa);

StageResult recover_absorption(const PairingEngine& e, const FanPtr& fan, const RecoverOptions& opt);
StageResult recover_potential(const PairingEngine& e, const FanPtr& fan, const RecoverOptions& opt,
                              double a_hat_max);

// exact ray integrals in place of the solver: S = int Psi_kappa (exp(-I(a)/2) - 1) by fiber quadrature
StageResult bypass_absorption(const Manifold& m, const Field& a, const FanPtr& fan, const RecoverOptions& opt);
StageResult bypass_potential(const Manifold& m, const Field& q, const FanPtr& fan, const RecoverOptions& opt);

// pointwise bound for the bypass stage: 2 L m_kappa / min(1 + Re S, exp(-I/2)), with L the
// chord-Lipschitz constant of exp(-I(a)(y, .)/2) over the fiber
struct BlurCheck {
    std::vector<double> exact;   // I(a)(y, theta) per fan node
    std::vector<double> bound;   // per fan node
    double worst_excess = 0.0;   // max |I-hat - I| - bound (<= 0 passes)
};
BlurCheck bypass_blur_check(const Manifold& m, const Field& a, const StageResult& st, const RecoverOptions& opt);

ReconstructionResult recover(const PairingEngine& absorption_engine, const PairingEngine& potential_engine,
                             const FanPtr& fan, const RecoverOptions& opt);

// relative error of the one-sided Neumann trace stencil on a normally incident wave, kd = depth / h
double trace_stencil_error(double kd);

// h with the smallest combined bar remainder_constant h + trace_stencil_error(depth / h) +
// blur_constant m(kappa_rule(h)), depth the deepest trace stencil; h failing the resolution
// gate of the grid is skipped
struct HChoice {
    double h = 0.0;
    std::vector<double> hs, bars;
    std::vector<std::string> refused;
};
HChoice select_h(const std::vector<double>& hs, const WaveGrid& grid, double remainder_constant,
                 double blur_constant = 1.0);

struct HolderFit {
    double slope = 0.0, intercept = 0.0;
};
// least squares of log(perturbation) against log(gap)
HolderFit holder_fit(const std::vector<double>& gaps, const std::vector<double>& perturbations);

// nodal values of a recovered field on its pixel grid: x,y,value
void write_field_csv(const InversionResult& r, const std::filesystem::path& p);
void write_stage_csv(const StageResult& st, const std::filesystem::path& p);

}  // namespace geowave
