// Serial reference against the OpenMP kernels. Arg 0 = serial, 1 = parallel.
#include <benchmark/benchmark.h>

#include "geowave/kernels.hpp"
#include "geowave/recover.hpp"

using namespace geowave;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::parallel : Exec::serial; }

Manifold desk() { return Manifold(conformal_linear_metric(0.2), {{0, 0}, 1.0}, {{0, 0}, 1.25}); }

void BM_ray_sums(benchmark::State& st) {
    static auto fan = make_fan(desk(), desk().outer(), 128, 64);
    static Field f = gaussian_field({0.1, 0.2}, 0.4, 1.0);
    std::vector<double> out(fan->size());
    for (auto _ : st) {
        kernels::ray_sums(*fan, f, out, exec_of(st));
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_csr_matvec(benchmark::State& st) {
    kernels::Csr a;
    a.rows = 200000;
    a.cols = 50000;
    Rng rng(5);
    a.ptr.push_back(0);
    for (int r = 0; r < a.rows; ++r) {
        for (int k = 0; k < 24; ++k) {
            a.col.push_back(int(rng.uniform() * a.cols));
            a.val.push_back(rng.uniform(-1.0, 1.0));
        }
        a.ptr.push_back(int(a.col.size()));
    }
    std::vector<double> x(a.cols, 1.0), y(a.rows);
    for (auto _ : st) {
        kernels::csr_matvec(a, x, y, exec_of(st));
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_wave_step(benchmark::State& st) {
    WaveConfig wc;
    wc.cells = 256;
    wc.T = 3.0;
    static auto g = make_wave_grid(desk(), wc);
    const auto& s = g->stencil();
    const std::size_t n = std::size_t(s.nx) * s.ny;
    kernels::cvec u(n, 1.0), up(n, 0.5), src, un(n);
    for (auto _ : st) {
        kernels::wave_step(s, u, up, src, un, exec_of(st));
        benchmark::DoNotOptimize(un.data());
    }
}

void BM_bypass_stage(benchmark::State& st) {
    Manifold m = desk();
    static auto fan = make_fan(m, m.outer(), 32, 32);
    RecoverOptions opt;
    opt.fiber_quadrature = 256;
    opt.invert.pixels = 32;
    opt.exec = exec_of(st);
    Field a = bump_field({0.2, -0.1}, 0.5, 0.2);
    for (auto _ : st) benchmark::DoNotOptimize(bypass_absorption(m, a, fan, opt).image.values.data());
}

}  // namespace

BENCHMARK(BM_ray_sums)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_csr_matvec)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_wave_step)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_bypass_stage)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
