#include "geowave/xray.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "geowave/kernels.hpp"

namespace geowave {

namespace {

// Simpson on each integrator step; the midpoint comes from the cubic Hermite interpolant
void simpson_nodes(const TracedRay& t, std::vector<Vec2>& nodes, std::vector<double>& weights) {
    const std::size_t n = t.samples.size() - 1;
    nodes.clear();
    weights.clear();
    if (n == 0) return;
    nodes.reserve(2 * n + 1);
    weights.reserve(2 * n + 1);
    nodes.push_back(t.samples[0].s.x);
    weights.push_back(0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& a = t.samples[j];
        const auto& b = t.samples[j + 1];
        double h = b.t - a.t;
        weights.back() += h / 6.0;
        nodes.push_back(0.5 * (a.s.x + b.s.x) + (h / 8.0) * (a.s.v - b.s.v));
        weights.push_back(4.0 * h / 6.0);
        nodes.push_back(b.s.x);
        weights.push_back(h / 6.0);
    }
}

}  // namespace

FanGrid::FanGrid(const Manifold& m, const Disk& boundary, int ns, int nb, double step, Exec exec)
    : m_(m), boundary_(boundary), ns_(ns), nb_(nb) {
    if (ns < 1 || nb < 1) throw InvalidArgument("fan needs at least one point and one angle");
    dbeta_ = pi / nb;
    step_ = step > 0.0 ? step : m.default_step();
    speed_.resize(ns);
    arclen_.resize(ns);
    for (int i = 0; i < ns; ++i) speed_[i] = m.boundary_speed(boundary, angle(i));
    // arclength by a fine midpoint rule
    const int sub = 16;
    double s = 0.0;
    for (int i = 0; i < ns; ++i) {
        arclen_[i] = s;
        for (int k = 0; k < sub; ++k) s += m.boundary_speed(boundary, angle(i) + dphi() * (k + 0.5) / sub) * dphi() / sub;
    }
    perimeter_ = s;

    rays_.resize(std::size_t(ns) * nb);
    auto build = [&](std::size_t k) {
        int is = int(k / nb), ib = int(k % nb);
        FiberFrame f = m_.boundary_frame(boundary_, angle(is));
        BoundaryRay& r = rays_[k];
        r.y = f.y;
        r.beta = beta(ib);
        r.angle = angle(is);
        r.xi = f.direction(r.beta);
        r.mu = std::cos(r.beta);
        TracedRay t = trace_to_exit(m_.metric(), {r.y, r.xi}, boundary_, {step_, false});
        r.exit = t.exit;
        r.grazing = t.grazing;
        simpson_nodes(t, r.nodes, r.weights);
    };
    const std::ptrdiff_t total = std::ptrdiff_t(rays_.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::ptrdiff_t k = 0; k < total; ++k) build(std::size_t(k));
    } else {
        for (std::ptrdiff_t k = 0; k < total; ++k) build(std::size_t(k));
    }
}

FanPtr make_fan(const Manifold& m, const Disk& boundary, int ns, int nb, double step, Exec exec) {
    return std::make_shared<const FanGrid>(m, boundary, ns, nb, step, exec);
}

RayImage forward(const FanPtr& grid, const Field& f, Exec exec) {
    if (!grid) throw Error("forward transform needs a traced fan");
    RayImage img{grid, std::vector<double>(grid->size())};
    kernels::ray_sums(*grid, f, img.values, exec);
    return img;
}

double boundary_l2_norm(const RayImage& img) {
    const FanGrid& g = *img.grid;
    double s = 0.0;
    for (int is = 0; is < g.ns(); ++is)
        for (int ib = 0; ib < g.nb(); ++ib) s += g.weight(is, ib) * img.at(is, ib) * img.at(is, ib);
    return std::sqrt(s);
}

double boundary_h1_norm(const RayImage& img) {
    const FanGrid& g = *img.grid;
    const int ns = g.ns(), nb = g.nb();
    if (ns < 3 || nb < 3) throw GridTooCoarse("H1 boundary norm needs at least 3 samples per direction");
    double s = 0.0;
    for (int is = 0; is < ns; ++is) {
        int ip = (is + 1) % ns, im = (is + ns - 1) % ns;
        double sp = g.arclength(ip) + (ip == 0 ? g.perimeter() : 0.0);
        double sm = g.arclength(im) - (is == 0 ? g.perimeter() : 0.0);
        for (int ib = 0; ib < nb; ++ib) {
            double v = img.at(is, ib);
            double ds = (img.at(ip, ib) - img.at(im, ib)) / (sp - sm);
            double db;
            if (ib == 0)
                db = (-3.0 * v + 4.0 * img.at(is, 1) - img.at(is, 2)) / (2.0 * g.dbeta());
            else if (ib == nb - 1)
                db = (3.0 * v - 4.0 * img.at(is, nb - 2) + img.at(is, nb - 3)) / (2.0 * g.dbeta());
            else
                db = (img.at(is, ib + 1) - img.at(is, ib - 1)) / (2.0 * g.dbeta());
            s += g.weight(is, ib) * (v * v + ds * ds + db * db);
        }
    }
    return std::sqrt(s);
}

PixelField::PixelField(int n, Vec2 origin, double h, std::vector<double> values)
    : n_(n), origin_(origin), h_(h), v_(std::move(values)) {
    if (v_.size() != std::size_t(n) * n) throw InvalidArgument("pixel field size mismatch");
}

double PixelField::value(Vec2 x) const {
    double fx = (x.x - origin_.x) / h_, fy = (x.y - origin_.y) / h_;
    if (fx < 0.0 || fy < 0.0 || fx > n_ - 1 || fy > n_ - 1) return 0.0;
    int i = std::min(int(fx), n_ - 2), j = std::min(int(fy), n_ - 2);
    double tx = fx - i, ty = fy - j;
    auto at = [&](int a, int b) { return v_[std::size_t(b) * n_ + a]; };
    return (1 - tx) * (1 - ty) * at(i, j) + tx * (1 - ty) * at(i + 1, j) + (1 - tx) * ty * at(i, j + 1) +
           tx * ty * at(i + 1, j + 1);
}

std::string PixelField::describe() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "pixels(%d,%.17g,%.17g,%.17g)", n_, origin_.x, origin_.y, h_);
    return buf;
}

PixelBasis make_pixel_basis(const Disk& m, int n) {
    if (n < 4) throw GridTooCoarse("pixel basis needs n >= 4");
    PixelBasis b;
    b.n = n;
    b.h = 2.0 * m.radius / (n - 1);
    b.origin = m.center - Vec2{m.radius, m.radius};
    b.index.assign(std::size_t(n) * n, -1);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            Vec2 x = b.origin + Vec2{i * b.h, j * b.h};
            // the hat's square support must lie in M
            if (norm(x - m.center) + b.h * std::sqrt(2.0) <= m.radius) {
                b.index[std::size_t(j) * n + i] = int(b.active.size());
                b.active.push_back(j * n + i);
            }
        }
    return b;
}

FiberMixing::FiberMixing(int nb, std::vector<double> matrix) : nb_(nb), m_(std::move(matrix)) {
    if (m_.size() != std::size_t(nb) * nb) throw InvalidArgument("fiber mixing matrix size mismatch");
}

void FiberMixing::apply(std::span<const double> in, std::span<double> out, bool transpose) const {
    std::size_t blocks = in.size() / nb_;
    for (std::size_t b = 0; b < blocks; ++b) {
        const double* x = in.data() + b * nb_;
        double* y = out.data() + b * nb_;
        for (int i = 0; i < nb_; ++i) {
            double s = 0.0;
            if (transpose)
                for (int j = 0; j < nb_; ++j) s += m_[std::size_t(j) * nb_ + i] * x[j];
            else
                for (int j = 0; j < nb_; ++j) s += m_[std::size_t(i) * nb_ + j] * x[j];
            y[i] = s;
        }
    }
}

namespace {

kernels::Csr system_matrix(const FanGrid& fan, const PixelBasis& basis, Exec exec) {
    const std::size_t nrays = fan.size();
    std::vector<std::vector<std::pair<int, double>>> rows(nrays);
    auto build = [&](std::size_t k) {
        const BoundaryRay& r = fan.ray(k);
        std::vector<std::pair<int, double>> acc;
        acc.reserve(r.nodes.size() * 4);
        for (std::size_t q = 0; q < r.nodes.size(); ++q) {
            Vec2 x = r.nodes[q];
            double fx = (x.x - basis.origin.x) / basis.h, fy = (x.y - basis.origin.y) / basis.h;
            if (fx < 0.0 || fy < 0.0 || fx >= basis.n - 1 || fy >= basis.n - 1) continue;
            int i = int(fx), j = int(fy);
            double tx = fx - i, ty = fy - j;
            const int corners[4][2] = {{i, j}, {i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
            const double wts[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
            for (int c = 0; c < 4; ++c) {
                int id = basis.index[std::size_t(corners[c][1]) * basis.n + corners[c][0]];
                if (id >= 0 && wts[c] > 0.0) acc.push_back({id, r.weights[q] * wts[c]});
            }
        }
        std::sort(acc.begin(), acc.end());
        std::vector<std::pair<int, double>> merged;
        for (auto& e : acc) {
            if (!merged.empty() && merged.back().first == e.first)
                merged.back().second += e.second;
            else
                merged.push_back(e);
        }
        rows[k] = std::move(merged);
    };
    const std::ptrdiff_t total = std::ptrdiff_t(nrays);
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::ptrdiff_t k = 0; k < total; ++k) build(std::size_t(k));
    } else {
        for (std::ptrdiff_t k = 0; k < total; ++k) build(std::size_t(k));
    }
    kernels::Csr a;
    a.rows = int(nrays);
    a.cols = int(basis.active.size());
    a.ptr.assign(nrays + 1, 0);
    for (std::size_t k = 0; k < nrays; ++k) a.ptr[k + 1] = a.ptr[k] + int(rows[k].size());
    a.col.resize(a.ptr.back());
    a.val.resize(a.ptr.back());
    for (std::size_t k = 0; k < nrays; ++k)
        for (std::size_t q = 0; q < rows[k].size(); ++q) {
            a.col[a.ptr[k] + q] = rows[k][q].first;
            a.val[a.ptr[k] + q] = rows[k][q].second;
        }
    return a;
}

// gradient penalty: sum over grid edges of (f_i - f_j)^2, inactive nodes held at zero
void apply_laplacian(const PixelBasis& b, std::span<const double> f, std::span<double> out) {
    const int n = b.n;
    for (std::size_t k = 0; k < b.active.size(); ++k) {
        int node = b.active[k];
        int i = node % n, j = node / n;
        double s = 0.0;
        const int nb[4][2] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
        for (auto& q : nb) {
            double fj = 0.0;
            if (q[0] >= 0 && q[0] < n && q[1] >= 0 && q[1] < n) {
                int id = b.index[std::size_t(q[1]) * n + q[0]];
                if (id >= 0) fj = f[id];
            }
            s += f[k] - fj;
        }
        out[k] = s;
    }
}

double dotv(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

template <class Op>
double power_norm(Op op, std::size_t n, int iters = 40) {
    std::vector<double> v(n, 1.0), w(n);
    double lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        double nv = std::sqrt(dotv(v, v));
        if (nv == 0.0) return 0.0;
        for (double& x : v) x /= nv;
        op(v, w);
        lam = std::sqrt(dotv(w, w));
        std::swap(v, w);
    }
    return lam;
}

}  // namespace

InversionResult invert(const RayImage& img, InvertOptions opt) {
    if (!img.grid) throw Error("ray image has no fan");
    if (opt.lambda_reg <= 0.0) throw InvalidArgument("regularization weight must be positive");
    for (double v : img.values)
        if (!std::isfinite(v)) throw InvalidArgument("ray image has non-finite values");
    const FanGrid& fan = *img.grid;
    if (opt.mixing && opt.mixing->nb() != fan.nb()) throw InvalidArgument("fiber mixing size does not match the fan");
    PixelBasis basis = make_pixel_basis(fan.manifold().inner(), opt.pixels);
    kernels::Csr A = system_matrix(fan, basis, opt.exec);
    kernels::Csr At = A.transpose();
    const std::size_t nr = fan.size(), np = basis.active.size();
    std::vector<double> W(nr);
    for (int is = 0; is < fan.ns(); ++is)
        for (int ib = 0; ib < fan.nb(); ++ib) W[std::size_t(is) * fan.nb() + ib] = fan.weight(is, ib);

    std::vector<double> ray_a(nr), ray_b(nr);
    // AtWA (mixing-aware)
    auto data_op = [&](std::span<const double> f, std::span<double> out) {
        kernels::csr_matvec(A, f, ray_a, opt.exec);
        if (opt.mixing) {
            opt.mixing->apply(ray_a, ray_b, false);
            for (std::size_t k = 0; k < nr; ++k) ray_b[k] *= W[k];
            opt.mixing->apply(ray_b, ray_a, true);
        } else {
            for (std::size_t k = 0; k < nr; ++k) ray_a[k] *= W[k];
        }
        kernels::csr_matvec(At, ray_a, out, opt.exec);
    };
    auto lap_op = [&](std::span<const double> f, std::span<double> out) { apply_laplacian(basis, f, out); };

    InversionResult res;
    double nA = power_norm(data_op, np);
    double nL = power_norm(lap_op, np);
    res.lambda_eff = opt.lambda_reg * nA / nL;

    // right-hand side At W (B^T) b
    std::vector<double> rhs(np);
    {
        std::vector<double> wb(nr);
        if (opt.mixing) {
            for (std::size_t k = 0; k < nr; ++k) ray_b[k] = W[k] * img.values[k];
            opt.mixing->apply(ray_b, wb, true);
        } else {
            for (std::size_t k = 0; k < nr; ++k) wb[k] = W[k] * img.values[k];
        }
        kernels::csr_matvec(At, wb, rhs, opt.exec);
    }
    std::vector<double> x(np, 0.0);
    auto pack = [&](const std::vector<double>& coeffs) {
        std::vector<double> nodal(std::size_t(basis.n) * basis.n, 0.0);
        for (std::size_t k = 0; k < np; ++k) nodal[basis.active[k]] = coeffs[k];
        auto pf = std::make_shared<const PixelField>(basis.n, basis.origin, basis.h, std::move(nodal));
        res.pixels = pf;
        res.field = Field(pf);
    };
    double bnorm = std::sqrt(dotv(rhs, rhs));
    if (bnorm == 0.0) {
        pack(x);
        return res;
    }
    std::vector<double> r = rhs, p = rhs, q(np), t(np);
    double rr = dotv(r, r);
    res.residuals.push_back(1.0);
    for (int it = 1; it <= opt.max_iter; ++it) {
        data_op(p, q);
        lap_op(p, t);
        for (std::size_t k = 0; k < np; ++k) q[k] += res.lambda_eff * t[k];
        double alpha = rr / dotv(p, q);
        for (std::size_t k = 0; k < np; ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        double rr_new = dotv(r, r);
        res.residuals.push_back(std::sqrt(rr_new) / bnorm);
        res.iterations = it;
        if (std::sqrt(rr_new) <= opt.tol * bnorm) {
            pack(x);
            return res;
        }
        double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t k = 0; k < np; ++k) p[k] = r[k] + beta * p[k];
    }
    throw NonConvergence("CG on the regularized normal equations hit the iteration cap", res.residuals);
}

double ray_integral(const MetricField& g, PhasePoint p, const Field& f, const Disk& b, double step) {
    double speed = std::sqrt(g.eval(p.x).g.quad(p.xi));
    if (speed == 0.0) throw InvalidArgument("ray integral needs a nonzero direction");
    TracedRay t = trace_to_exit(g, p, b, {step / speed, false});
    std::vector<Vec2> nodes;
    std::vector<double> w;
    simpson_nodes(t, nodes, w);
    double s = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) s += w[j] * f(nodes[j]);
    return s;
}

KineticReport kinetic_check(const Manifold& m, const Field& f, std::span<const PhasePoint> samples, double delta,
                            double step) {
    if (step <= 0.0) step = m.default_step();
    const MetricField& g = m.metric();
    const Disk& b = m.outer();
    KineticReport rep;
    for (const PhasePoint& p : samples) {
        double lp = exit_time(g, p, b, step).time;
        double lm = -exit_time_backward(g, p, b, step);
        if (lp <= 2.0 * delta || lm <= 2.0 * delta) {
            ++rep.skipped;
            continue;
        }
        PhasePoint fw = flow(g, p, delta, step);
        PhasePoint bw = flow(g, p, -delta, step);
        double Hu = (ray_integral(g, fw, f, b, step) - ray_integral(g, bw, f, b, step)) / (2.0 * delta);
        rep.max_residual = std::max(rep.max_residual, std::abs(Hu + f(p.x)));
        ++rep.evaluated;
    }
    return rep;
}

StabilityReport stability_ratio(const Manifold& m, const std::vector<Field>& phantoms, int ns, int nb, Exec exec) {
    SimplicityVerdict v = check_simple(m);
    if (!v.simple) throw InvalidArgument("stability ratio needs a simple manifold with k+ < 1");
    FanPtr fan = make_fan(m, m.outer(), ns, nb, 0.0, exec);
    StabilityReport rep;
    for (const Field& f : phantoms) {
        double fn = l2_norm(f, m);
        double In = boundary_h1_norm(forward(fan, f, exec));
        if (In == 0.0) {
            if (fn > 0.0) ++rep.anomalies;
            continue;
        }
        rep.ratios.push_back(fn / In);
    }
    for (double r : rep.ratios) {
        rep.max = std::max(rep.max, r);
        rep.mean += r;
    }
    if (!rep.ratios.empty()) rep.mean /= double(rep.ratios.size());
    return rep;
}

}  // namespace geowave
