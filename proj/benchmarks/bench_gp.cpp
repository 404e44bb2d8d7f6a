#include <benchmark/benchmark.h>

#include "mdetect/gp.hpp"

using namespace mdetect::gp;

static void BM_GramMatrix(benchmark::State& state) {
    KernelSpec nominal;
    const auto grid = uniform_grid(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(gram_matrix(nominal, grid));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GramMatrix)->Range(128, 1024)->Complexity();

static void BM_SamplerSetup(benchmark::State& state) {
    KernelSpec nominal;
    const auto grid = uniform_grid(1000);
    for (auto _ : state) {
        benchmark::DoNotOptimize(GpSampler(nominal, grid));
    }
}
BENCHMARK(BM_SamplerSetup)->Unit(benchmark::kMillisecond);

static void BM_SampleSeries(benchmark::State& state) {
    KernelSpec nominal;
    const GpSampler sampler(nominal, uniform_grid(1000));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sampler.sample(seed++));
    }
}
BENCHMARK(BM_SampleSeries);
