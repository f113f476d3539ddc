#pragma once

#include <memory>
#include <span>
#include <vector>

#include "geowave/fields.hpp"
#include "geowave/geodesics.hpp"

namespace geowave {

struct BoundaryRay {
    Vec2 y, xi;
    double exit = 0.0;
    double mu = 0.0;
    double angle = 0.0;  // boundary parameter of y
    double beta = 0.0;   // angle to the inward normal
    bool grazing = false;
    // composite Simpson rule over the integrator steps (Hermite midpoints)
    std::vector<Vec2> nodes;
    std::vector<double> weights;
};

// Fan over the inward boundary directions of a disk, parameterized by the
// boundary angle (uniform, ns points) and beta in (-pi/2, pi/2) (nb midpoints).
class FanGrid {
public:
    FanGrid(const Manifold& m, const Disk& boundary, int ns, int nb, double step = 0.0, Exec exec = Exec::parallel);

    int ns() const { return ns_; }
    int nb() const { return nb_; }
    std::size_t size() const { return rays_.size(); }
    const BoundaryRay& ray(int is, int ib) const { return rays_[std::size_t(is) * nb_ + ib]; }
    const BoundaryRay& ray(std::size_t k) const { return rays_[k]; }
    double angle(int is) const { return 2.0 * pi * is / ns_; }
    double beta(int ib) const { return -0.5 * pi + (ib + 0.5) * dbeta_; }
    double dphi() const { return 2.0 * pi / ns_; }
    double dbeta() const { return dbeta_; }
    // |d y / d angle|_g and cumulative boundary arclength
    double speed(int is) const { return speed_[is]; }
    double arclength(int is) const { return arclen_[is]; }
    double perimeter() const { return perimeter_; }
    // mu dsigma dbeta
    double weight(int is, int ib) const { return ray(is, ib).mu * speed_[is] * dphi() * dbeta_; }
    double step() const { return step_; }
    const Manifold& manifold() const { return m_; }
    const Disk& boundary() const { return boundary_; }

private:
    Manifold m_;
    Disk boundary_;
    int ns_, nb_;
    double dbeta_, step_, perimeter_ = 0.0;
    std::vector<double> speed_, arclen_;
    std::vector<BoundaryRay> rays_;
};

using FanPtr = std::shared_ptr<const FanGrid>;

FanPtr make_fan(const Manifold& m, const Disk& boundary, int ns, int nb, double step = 0.0, Exec exec = Exec::parallel);

struct RayImage {
    FanPtr grid;
    std::vector<double> values;  // index is * nb + ib

    double at(int is, int ib) const { return values[std::size_t(is) * grid->nb() + ib]; }
    double& at(int is, int ib) { return values[std::size_t(is) * grid->nb() + ib]; }
};

RayImage forward(const FanPtr& grid, const Field& f, Exec exec = Exec::parallel);

double boundary_l2_norm(const RayImage& img);
// (|If|^2 + |d_s If|^2 + |d_beta If|^2 in L2_mu)^{1/2}
double boundary_h1_norm(const RayImage& img);

// Bilinear nodal field on a square grid over the disk M.
class PixelField final : public ScalarField {
public:
    PixelField(int n, Vec2 origin, double h, std::vector<double> values);
    double value(Vec2 x) const override;
    std::string describe() const override;
    int n() const { return n_; }
    Vec2 node(int i, int j) const { return origin_ + Vec2{i * h_, j * h_}; }
    const std::vector<double>& values() const { return v_; }
    double spacing() const { return h_; }

private:
    int n_;
    Vec2 origin_;
    double h_;
    std::vector<double> v_;
};

// Pixel basis of bilinear hats whose support lies inside M.
struct PixelBasis {
    int n = 0;
    Vec2 origin;
    double h = 0.0;
    std::vector<int> index;   // n*n -> active index or -1
    std::vector<int> active;  // active index -> grid node
};

PixelBasis make_pixel_basis(const Disk& m, int n);

// Linear map acting independently on each boundary point's fan of nb values.
class FiberMixing {
public:
    FiberMixing(int nb, std::vector<double> matrix);
    int nb() const { return nb_; }
    void apply(std::span<const double> in, std::span<double> out, bool transpose) const;
    double entry(int i, int j) const { return m_[std::size_t(i) * nb_ + j]; }

private:
    int nb_;
    std::vector<double> m_;
};

struct InvertOptions {
    int pixels = 64;
    double lambda_reg = 1e-3;
    int max_iter = 4000;
    double tol = 1e-8;
    const FiberMixing* mixing = nullptr;  // data model B A f instead of A f
    Exec exec = Exec::parallel;
};

struct InversionResult {
    Field field;
    std::shared_ptr<const PixelField> pixels;
    int iterations = 0;
    double lambda_eff = 0.0;
    std::vector<double> residuals;
};

// Tikhonov least squares min |A f - img|^2_mu + lambda |grad f|^2 over the pixel basis, by CG.
InversionResult invert(const RayImage& img, InvertOptions opt = {});

// u(x, xi) = int_0^{l+} f(gamma(t)) dt, step measured in arclength
double ray_integral(const MetricField& g, PhasePoint p, const Field& f, const Disk& b, double step);

struct KineticReport {
    double max_residual = 0.0;
    int evaluated = 0;
    int skipped = 0;
};

// max |Hu + f| with Hu by centered differences of u along the flow
KineticReport kinetic_check(const Manifold& m, const Field& f, std::span<const PhasePoint> samples, double delta,
                            double step = 0.0);

struct StabilityReport {
    std::vector<double> ratios;
    double max = 0.0;
    double mean = 0.0;
    int anomalies = 0;  // nonzero phantom with a vanishing image
};

// |f|_{L2(M)} / |If|_{H1} over the fan on the outer boundary
StabilityReport stability_ratio(const Manifold& m, const std::vector<Field>& phantoms, int ns, int nb,
                                Exec exec = Exec::parallel);

}  // namespace geowave
