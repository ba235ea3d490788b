#include <benchmark/benchmark.h>

#include "lskde/estimators.hpp"
#include "lskde/experiments.hpp"

using namespace lskde;

namespace {

const TestDensity& density() { return density_by_name("mixture1d"); }

ProductKernel kernel() {
    return ProductKernel(build_higher_order(triangular_kernel(), 1), 1);
}

void bm_fit_direct(benchmark::State& state) {
    const ProductKernel K = kernel();
    const auto n = static_cast<std::size_t>(state.range(0));
    const Sample s = draw_sample(density(), n, 1, 0);
    const double h = 0.2;
    const auto grid = build_eval_grid(data_box(s), K, {h}, h / 64.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_kde(s, K, Bandwidth({h}), grid, FitOptions{false}));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n));
}

void bm_fit_binned(benchmark::State& state) {
    const ProductKernel K = kernel();
    const auto n = static_cast<std::size_t>(state.range(0));
    const Sample s = draw_sample(density(), n, 1, 0);
    const double h = 0.2;
    const auto grid = build_eval_grid(data_box(s), K, {h}, h / 64.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_kde(s, K, Bandwidth({h}), grid, FitOptions{true}));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n));
}

void bm_fit_aux(benchmark::State& state) {
    const ProductKernel K = kernel();
    const auto n = static_cast<std::size_t>(state.range(0));
    const Sample s = draw_sample(density(), n, 1, 0);
    const Bandwidth h({0.2}), eta({0.4});
    const auto grid = build_eval_grid(data_box(s), K, {0.6}, 0.2 / 64.0);
    const ConvKernel conv = convolve_pair(K, h, eta);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_aux(s, K, h, eta, grid, FitOptions{false}, &conv));
    }
}

void bm_smoothed_truth(benchmark::State& state) {
    const ProductKernel K = kernel();
    const auto grid = make_grid({{-4.0, 4.0}}, {static_cast<std::size_t>(state.range(0))});
    GridFunction f(grid);
    std::vector<double> t(1);
    for (std::size_t j = 0; j < grid->size(); ++j) {
        t[0] = grid->coord(0, j);
        f[j] = density().pdf(t);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(smoothed_truth(f, K, Bandwidth({0.3})));
    }
}

BENCHMARK(bm_fit_direct)->Arg(1000)->Arg(8000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_fit_binned)->Arg(1000)->Arg(8000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_fit_aux)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_smoothed_truth)->Arg(4096)->Arg(65536)->Unit(benchmark::kMillisecond);

} // namespace
