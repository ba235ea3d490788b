#include <benchmark/benchmark.h>

#include <cmath>

#include "lskde/experiments.hpp"
#include "lskde/selection.hpp"

using namespace lskde;

namespace {

void bm_engine_run(benchmark::State& state, bool binned) {
    const ProductKernel K(build_higher_order(triangular_kernel(), 1), 1);
    const TestDensity& f = density_by_name("mixture1d");
    const auto n = static_cast<std::size_t>(state.range(0));
    const BandwidthGrid H = BandwidthGrid::geometric({0.05}, {1.0}, std::sqrt(2.0));
    StudyOptions gopts;
    const auto grid = study_grid(f, K, H.h_min(), H.h_max(), gopts);
    const SelectionEngine engine(K, H, grid, MajorantConfig::make(2.0, n),
                                 SelectionOptions{binned, 1, 32});
    const Sample s = draw_sample(f, n, 3, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(engine.run(s));
    }
}

void bm_select_direct(benchmark::State& state) { bm_engine_run(state, false); }
void bm_select_spectral(benchmark::State& state) { bm_engine_run(state, true); }

void bm_engine_setup(benchmark::State& state) {
    const ProductKernel K(build_higher_order(triangular_kernel(), 1), 1);
    const TestDensity& f = density_by_name("mixture1d");
    const BandwidthGrid H = BandwidthGrid::geometric({0.05}, {1.0}, std::sqrt(2.0));
    StudyOptions gopts;
    const auto grid = study_grid(f, K, H.h_min(), H.h_max(), gopts);
    for (auto _ : state) {
        const SelectionEngine engine(K, H, grid, MajorantConfig::make(2.0, 500),
                                     SelectionOptions{false, 1, 32});
        benchmark::DoNotOptimize(engine.prebuilt_table());
    }
}

BENCHMARK(bm_select_direct)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_select_spectral)->Arg(500)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_engine_setup)->Unit(benchmark::kMillisecond);

} // namespace
