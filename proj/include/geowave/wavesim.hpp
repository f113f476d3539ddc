#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "geowave/fields.hpp"
#include "geowave/kernels.hpp"

namespace geowave {

using kernels::cvec;

struct WaveConfig {
    int cells = 128;          // grid cells across the diameter of M
    double cfl = 0.5;         // dt * sqrt(lambda_max) / 2 for the discrete operator
    double T = 3.0;           // horizon
    int trace_points = 256;   // boundary samples of the Neumann trace
    int trace_stride = 4;     // trace stored every stride time steps
    int trace_order = 2;      // probes of the one-sided normal stencil (2 or 3)
    // close the two-probe stencil with u_nn from the equation at dM (data, a, q, F
    // and the tangential derivatives are known there); needs trace_order 2
    bool trace_pde = true;
    // exact number of time steps (0 picks the fewest stable ones); must keep CFL < 1
    int steps = 0;
    Exec exec = Exec::parallel;

    std::string describe() const;
};

// Damping a and potential q of (d_t^2 - Delta_g + a d_t + q) u = F.
struct Coefficients {
    Field a = zero_field();
    Field q = zero_field();
    std::string describe() const { return "a=" + a.describe() + ";q=" + q.describe(); }
};

// Boundary values at a fixed set of points on dM, as a function of time.
class BoundaryEval {
public:
    virtual ~BoundaryEval() = default;
    virtual void eval(double t, std::span<Complex> out) const = 0;
};

class BoundaryData {
public:
    virtual ~BoundaryData() = default;
    // precompute whatever depends only on the points
    virtual std::unique_ptr<BoundaryEval> bind(std::span<const Vec2> points) const = 0;
    // content key for caching; must determine the values
    virtual std::string key() const = 0;
};

using DataPtr = std::shared_ptr<const BoundaryData>;

// f(x, t) given in closed form; key must identify the function
DataPtr analytic_data(std::string key, std::function<Complex(Vec2, double)> f);
DataPtr zero_data();
DataPtr combine(const DataPtr& a, Complex ca, const DataPtr& b, Complex cb);
// f(x, T - t)
DataPtr time_reversed(const DataPtr& f, double T);

// Samples of a complex field on the trace points of dM times the trace times.
struct BoundarySignal {
    std::vector<double> angles;     // boundary parameter of each trace point
    std::vector<double> arclength;  // cumulative g-arclength at each point
    std::vector<double> dsigma;     // g-arclength weight of each point
    std::vector<double> times;
    std::vector<Complex> values;    // index it * npoints + ip
    bool compatible = true;         // vanishes at t = 0

    std::size_t npoints() const { return angles.size(); }
    std::size_t ntimes() const { return times.size(); }
    Complex at(std::size_t it, std::size_t ip) const { return values[it * npoints() + ip]; }
    Complex& at(std::size_t it, std::size_t ip) { return values[it * npoints() + ip]; }
};

// trapezoid in time, uniform rule along the closed boundary
double signal_l2_norm(const BoundarySignal& s);
// int int conj(g) f dsigma dt
Complex signal_pairing(const BoundarySignal& g, const BoundarySignal& f);
BoundarySignal signal_difference(const BoundarySignal& a, const BoundarySignal& b);
void write_signal_csv(const BoundarySignal& s, const std::filesystem::path& p);

// Cartesian grid over M. Grid arms that cross dM are closed with the Dirichlet
// value at the crossing (linear, symmetric closure); nodes closer than a quarter
// cell to dM along an arm are dropped from the unknowns.
class WaveGrid {
public:
    WaveGrid(const Manifold& m, WaveConfig cfg);

    const Manifold& manifold() const { return m_; }
    const WaveConfig& config() const { return cfg_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double dx() const { return dx_; }
    double dt() const { return dt_; }
    int steps() const { return steps_; }
    double cfl_ratio() const { return cfl_ratio_; }
    Vec2 node(int k) const { return origin_ + Vec2{(k % nx_) * dx_, (k / nx_) * dx_}; }
    const std::vector<int>& interior() const { return interior_; }
    bool is_interior(int k) const { return mask_[k] == 1; }
    std::size_t ghost_count() const { return ghosts_.size(); }
    // geometric part of the scheme (coefficients a, q left at zero)
    const kernels::WaveStencil& stencil() const { return stencil_; }
    // sqrt|g| dx^2 at interior nodes
    double volume(int k) const { return vol_[k]; }

    // ghost values from the Dirichlet data at their boundary projections; only
    // the mixed g^12 term reads them
    void fill_ghosts(cvec& u, std::span<const Complex> boundary_values) const;
    const std::vector<Vec2>& ghost_projections() const { return ghost_proj_; }

    // crossings of grid arms with dM and the forcing they contribute
    const std::vector<Vec2>& cut_points() const { return cut_pts_; }
    void add_boundary_forcing(cvec& src, std::span<const Complex> cut_values) const;
    // sqrt|g| g^ii / theta summed over the cut arms of node k
    double cut_weight(int k) const { return cut_w_[k]; }

    // trace geometry
    const std::vector<Vec2>& trace_points() const { return trace_pts_; }
    // trace points followed by the interior probe points of each trace stencil
    const std::vector<Vec2>& trace_stencil_points() const { return trace_stencil_pts_; }
    int trace_depths() const { return cfg_.trace_order; }
    BoundarySignal empty_trace() const;
    int trace_count() const { return steps_ / cfg_.trace_stride + 1; }

    struct Weighted {
        int node;
        double w;
    };
    // interpolation weights of probe j (1-based) of trace point ip, its spacing and outward normal
    const std::vector<Weighted>& trace_probe(int ip, int j) const {
        return trace_probe_w_[std::size_t(ip) * cfg_.trace_order + (j - 1)];
    }
    double trace_spacing(int ip) const { return trace_depth_[ip]; }
    Vec2 trace_normal(int ip) const { return trace_normals_[ip]; }

    // value at x by tensor cubic interpolation (x must have an interior 4x4 stencil)
    Complex interpolate(const cvec& u, Vec2 x) const;

    std::string describe() const;

private:
    // 4x4 Lagrange stencil at x, or empty if it touches a non-interior node
    std::vector<Weighted> cubic_stencil(Vec2 x) const;
    // probe stencil at depth d along the inward Euclidean normal of the boundary point b
    double probe_depth(Vec2 b, double start) const;

    Manifold m_;
    WaveConfig cfg_;
    int nx_ = 0, ny_ = 0, steps_ = 0;
    double dx_ = 0, dt_ = 0, cfl_ratio_ = 0;
    Vec2 origin_;
    std::vector<char> mask_;  // 1 interior, 2 ghost, 0 unused
    std::vector<int> interior_;
    std::vector<double> vol_;
    kernels::WaveStencil stencil_;

    struct Ghost {
        int node;
        double wb;  // weight of the boundary value
        std::vector<Weighted> w;
    };
    std::vector<Ghost> ghosts_;
    std::vector<Vec2> ghost_proj_;

    struct Cut {
        int node;
        double coef;  // inv_vol * A / (theta dx^2)
    };
    std::vector<Cut> cuts_;
    std::vector<Vec2> cut_pts_;
    std::vector<double> cut_w_;

    std::vector<Vec2> trace_pts_, trace_normals_, trace_stencil_pts_;
    std::vector<double> trace_angles_, trace_depth_;
    std::vector<std::vector<Weighted>> trace_probe_w_;  // per trace point and depth
};

using GridPtr = std::shared_ptr<const WaveGrid>;
GridPtr make_wave_grid(const Manifold& m, WaveConfig cfg);

// T > Diam_g(M1) + 2 eps
void check_horizon(const Manifold& m, double T, double eps);

struct SolveOptions {
    // optional source F(x, t) at interior nodes
    std::function<Complex(Vec2, double)> source;
    bool want_trace = true;
    bool want_energy = false;
    // called after each step with the step index n (time n dt) and the field
    std::function<void(int, const cvec&)> observer;
    // growth cap on max |u| relative to the data and source scale
    double blowup_factor = 1e6;
};

struct SolveResult {
    BoundarySignal trace;         // Neumann trace d_nu u
    std::vector<double> energy;   // discrete energy per step (want_energy)
    cvec final_u;
    double max_abs = 0.0;
};

// u(0) = u_t(0) = 0, u = f on the boundary
SolveResult solve_ibvp(const GridPtr& grid, const Coefficients& c, const DataPtr& dirichlet, SolveOptions opt = {});
// homogeneous Dirichlet, u(0) = u0, u_t(0) = u1
SolveResult solve_free(const GridPtr& grid, const Coefficients& c, const std::function<double(Vec2)>& u0,
                       const std::function<double(Vec2)>& u1, SolveOptions opt = {});

// Dirichlet-to-Neumann map with a content-addressed response cache.
class DtnOperator {
public:
    DtnOperator(GridPtr grid, Coefficients c, std::filesystem::path cache_dir = {});

    BoundarySignal apply(const DataPtr& f) const;
    // backward-equation map (damping -a, zero final data at T)
    BoundarySignal apply_adjoint(const DataPtr& f) const;

    const GridPtr& grid() const { return grid_; }
    const Coefficients& coefficients() const { return c_; }
    std::string key(const DataPtr& f, bool adjoint) const;
    int solves() const { return solves_; }
    int cache_hits() const { return hits_; }

private:
    GridPtr grid_;
    Coefficients c_;
    std::filesystem::path cache_dir_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::shared_ptr<const BoundarySignal>> memo_;
    mutable int solves_ = 0, hits_ = 0;
};

// H1(Sigma) norm of boundary data sampled on the trace points: |f|^2 + |d_t f|^2 + |d_s f|^2
double data_h1_norm(const WaveGrid& grid, const DataPtr& f);
// sampled data as trace-grid signal
BoundarySignal sample_data(const WaveGrid& grid, const DataPtr& f);

struct GapEstimate {
    double value = 0.0;
    std::vector<double> probe_ratios;  // |(L1 - L2) f| / |f|_H1 per probe
    std::vector<double> power_ratios;  // per power iteration
};

// max over probes of |(L1 - L2) f|_L2 / |f|_H1, refined by power iteration on the difference
GapEstimate dtn_gap_norm(const DtnOperator& a, const DtnOperator& b, const std::vector<DataPtr>& probes,
                         int power_iterations = 2);

struct EnergyReport {
    double ratio = 0.0;  // max_t (|u_t| + |grad u|) / |F|_L2(Q)
    double source_norm = 0.0;
};

EnergyReport energy_residual(const GridPtr& grid, const Coefficients& c,
                             const std::function<Complex(Vec2, double)>& source);

// Binary signal files for the cache.
void save_signal(const BoundarySignal& s, const std::filesystem::path& p);
BoundarySignal load_signal(const std::filesystem::path& p);

}  // namespace geowave
