#include <benchmark/benchmark.h>

#include "mdetect/detector.hpp"
#include "mdetect/rng.hpp"

using namespace mdetect;

namespace {

struct Fixture {
    DatasetManifest manifest;
    std::vector<Trial> trials;
    NominalModel model;
    Trial held;

    static Fixture make(std::int64_t n_timesteps, std::size_t n_params,
                        std::vector<WindowFamily> families) {
        DatasetManifest m;
        m.n_timesteps = n_timesteps;
        m.dt = 1.0;
        for (std::size_t p = 0; p < n_params; ++p)
            m.parameter_names.push_back("c" + std::to_string(p));
        m.class_names = {"nominal", "anomaly"};
        Rng rng(7);
        std::vector<Trial> trials;
        for (int i = 0; i < 80; ++i) {
            Trial t;
            t.trial_id = i;
            t.values.resize(n_timesteps, static_cast<Eigen::Index>(n_params));
            for (Eigen::Index r = 0; r < t.values.rows(); ++r)
                for (Eigen::Index c = 0; c < t.values.cols(); ++c) t.values(r, c) = rng.normal();
            t.labels.classes.assign(static_cast<std::size_t>(n_timesteps), 0);
            trials.push_back(std::move(t));
        }
        std::vector<const Trial*> ptrs;
        for (const auto& t : trials) ptrs.push_back(&t);
        auto model = NominalModel::fit(ptrs, m, families, 1e-4, 0.99, 1);
        Trial held = trials.back();
        return Fixture{std::move(m), std::move(trials), std::move(model), std::move(held)};
    }
};

Fixture& detector_fixture() {
    static Fixture f = Fixture::make(1000, 4, {{1, 1, 1}, {20, 1, 1}, {100, 5, 1}});
    return f;
}

}  // namespace

static void BM_WindowMdist(benchmark::State& state) {
    auto& f = detector_fixture();
    const auto x = f.model.window_slice(1, 40, 0, f.held.values);
    for (auto _ : state) {
        benchmark::DoNotOptimize(f.model.window_mdist(1, 40, 0, x));
    }
}
BENCHMARK(BM_WindowMdist);

static void BM_WindowMdist100(benchmark::State& state) {
    auto& f = detector_fixture();
    const auto x = f.model.window_slice(2, 10, 0, f.held.values);
    for (auto _ : state) {
        benchmark::DoNotOptimize(f.model.window_mdist(2, 10, 0, x));
    }
}
BENCHMARK(BM_WindowMdist100);

static void BM_DetectTrial(benchmark::State& state) {
    auto& f = detector_fixture();
    for (auto _ : state) {
        benchmark::DoNotOptimize(detect_trial(f.model, f.held));
    }
}
BENCHMARK(BM_DetectTrial)->Unit(benchmark::kMillisecond);

static void BM_FitNominal(benchmark::State& state) {
    auto& f = detector_fixture();
    std::vector<const Trial*> ptrs;
    for (const auto& t : f.trials) ptrs.push_back(&t);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            NominalModel::fit(ptrs, f.manifest, f.model.families(), 1e-4, 0.99, 1));
    }
}
BENCHMARK(BM_FitNominal)->Unit(benchmark::kMillisecond);
