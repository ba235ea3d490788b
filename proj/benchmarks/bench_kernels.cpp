#include <benchmark/benchmark.h>

#include "lskde/kernels.hpp"

using namespace lskde;

namespace {

void bm_convolve_pair(benchmark::State& state) {
    const ProductKernel K(build_higher_order(triangular_kernel(), 2), 1);
    const Bandwidth h({1.0}), eta({0.05});
    const auto samples = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(convolve_pair(K, h, eta, samples));
    }
}

void bm_higher_order_norm(benchmark::State& state) {
    const BaseKernel1D base = triangular_kernel();
    for (auto _ : state) {
        // Fresh kernel each round so the norm cache does not short-circuit.
        const HigherOrderKernel1D u(base, 3);
        benchmark::DoNotOptimize(u.norm(1.7));
    }
}

BENCHMARK(bm_convolve_pair)->Arg(32)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_higher_order_norm)->Unit(benchmark::kMillisecond);

} // namespace

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    return 0;
}
