#include <benchmark/benchmark.h>

#include "mdetect/rng.hpp"
#include "mdetect/sim.hpp"

using namespace mdetect::sim;

static void BM_SimStep(benchmark::State& state) {
    auto config = default_monte_carlo();
    SystemModel model(config.scenario, SystemModel::nominal_variation(config.scenario));
    auto sys = model.initial_state();
    for (auto _ : state) {
        model.step(sys, config.dt);
        benchmark::DoNotOptimize(sys.volumes[0].gas_mass);
        if (sys.time > 1000.0) sys = model.initial_state();
    }
}
BENCHMARK(BM_SimStep);

static void BM_RunNominalTrial(benchmark::State& state) {
    auto config = default_monte_carlo();
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_trial(config, std::nullopt, seed++, 0));
    }
}
BENCHMARK(BM_RunNominalTrial)->Unit(benchmark::kMillisecond);

static void BM_RunAnomalyTrial(benchmark::State& state) {
    auto config = default_monte_carlo();
    mdetect::Rng rng(3);
    const auto meta = draw_anomaly(config.classes[1], config.scenario.phases, rng);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_trial(config, meta, seed++, 0));
    }
}
BENCHMARK(BM_RunAnomalyTrial)->Unit(benchmark::kMillisecond);
