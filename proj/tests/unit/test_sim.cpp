#include <doctest.h>

#include <cmath>

#include "mdetect/error.hpp"
#include "mdetect/rng.hpp"
#include "mdetect/sim.hpp"
#include "mdetect/stats.hpp"

using namespace mdetect;
using namespace mdetect::sim;

namespace {

/// Two finite volumes joined by one valve; no boundaries, no liquid.
Scenario two_volume(double p1, double p2, CommandMode mode) {
    Scenario s;
    s.volumes = {
        {.name = "a", .volume = 1.0, .init_pressure = p1, .init_temperature = 300.0},
        {.name = "b", .volume = 2.0, .init_pressure = p2, .init_temperature = 280.0},
    };
    ValveSpec v;
    v.name = "V-AB";
    v.upstream = "a";
    v.downstream = "b";
    v.full_area = 1e-4;
    v.schedule = {{0.0, mode, 0.0, 0.0}};
    s.valves = {v};
    s.sensors = {{"P_a", "a", SensorSpec::Quantity::pressure, 0.0}};
    return s;
}

}  // namespace

TEST_CASE("orifice flux: equal pressures give zero flow, choked formula is continuous") {
    GasProperties gas;
    CHECK(orifice_mass_flux(1e6, 1e6, 300.0, gas) == 0.0);
    CHECK(orifice_mass_flux(1e6, 2e6, 300.0, gas) == 0.0);  // reversed handled by caller
    const double critical = std::pow(2.0 / (gas.gamma + 1.0), gas.gamma / (gas.gamma - 1.0));
    const double at_crit = orifice_mass_flux(1e6, critical * 1e6, 300.0, gas);
    const double below = orifice_mass_flux(1e6, (critical - 1e-6) * 1e6, 300.0, gas);
    CHECK(at_crit == doctest::Approx(below).epsilon(1e-4));
    // Choked flow is independent of downstream pressure.
    CHECK(orifice_mass_flux(1e6, 0.1e6, 300.0, gas) ==
          doctest::Approx(orifice_mass_flux(1e6, 0.2e6, 300.0, gas)));
}

TEST_CASE("closed system conserves every gas mass exactly") {
    auto scenario = two_volume(5e5, 2e5, CommandMode::forced_closed);
    SystemModel model(scenario, SystemModel::nominal_variation(scenario));
    auto state = model.initial_state();
    const double m0 = state.volumes[0].gas_mass;
    const double m1 = state.volumes[1].gas_mass;
    for (int i = 0; i < 100; ++i) model.step(state, 0.1);
    CHECK(state.volumes[0].gas_mass == m0);
    CHECK(state.volumes[1].gas_mass == m1);
}

TEST_CASE("equal upstream and downstream pressures produce no flow through an open valve") {
    auto scenario = two_volume(4e5, 4e5, CommandMode::forced_open);
    SystemModel model(scenario, SystemModel::nominal_variation(scenario));
    auto state = model.initial_state();
    const double m0 = state.volumes[0].gas_mass;
    for (int i = 0; i < 50; ++i) model.step(state, 0.1);
    CHECK(state.volumes[0].gas_mass == m0);
}

TEST_CASE("two-volume blowdown: monotone approach to the analytic equilibrium") {
    auto scenario = two_volume(8e5, 1e5, CommandMode::forced_open);
    SystemModel model(scenario, SystemModel::nominal_variation(scenario));
    auto state = model.initial_state();
    const double pair_mass = state.volumes[0].gas_mass + state.volumes[1].gas_mass;
    // Adiabatic ideal-gas equilibrium: volume-weighted initial pressure.
    const double p_eq = (8e5 * 1.0 + 1e5 * 2.0) / 3.0;

    double prev_hi = model.pressure(state, 0);
    double prev_lo = model.pressure(state, 1);
    for (int i = 0; i < 4000; ++i) {
        model.step(state, 0.05);
        const double hi = model.pressure(state, 0);
        const double lo = model.pressure(state, 1);
        CHECK(hi <= prev_hi * (1.0 + 1e-12));
        CHECK(lo >= prev_lo * (1.0 - 1e-12));
        prev_hi = hi;
        prev_lo = lo;
        const double total = state.volumes[0].gas_mass + state.volumes[1].gas_mass;
        CHECK(std::fabs(total - pair_mass) <= 1e-10 * pair_mass);
    }
    CHECK(model.pressure(state, 0) == doctest::Approx(p_eq).epsilon(1e-3));
    CHECK(model.pressure(state, 1) == doctest::Approx(p_eq).epsilon(1e-3));
}

TEST_CASE("full-scenario per-step mass accounting closes to 1e-9 relative") {
    auto config = default_monte_carlo();
    Rng rng(12);
    SystemModel model(config.scenario, SystemModel::draw_variation(config.scenario, rng));
    auto state = model.initial_state();
    for (int k = 0; k < 600; ++k) {
        const double before = model.total_internal_gas_mass(state);
        model.step(state, config.dt);
        const double after = model.total_internal_gas_mass(state);
        const double boundary = state.boundary_inflow - state.boundary_outflow;
        CHECK(std::fabs(after - before - boundary) <= 1e-9 * std::max(1.0, before));
    }
}

TEST_CASE("valve positions stay in [0,1] under every injection mode") {
    auto config = default_monte_carlo();
    Rng rng(77);
    for (const auto& spec : config.classes) {
        auto meta = draw_anomaly(spec, config.scenario.phases, rng);
        // Shift short anomalies into the early phase so the loop below sees them.
        if (meta.end_time - meta.start_time < 50.0) {
            meta.start_time = 10.0;
            meta.end_time = 40.0;
        }
        SystemModel model(config.scenario, SystemModel::draw_variation(config.scenario, rng));
        auto state = model.initial_state();
        for (int k = 0; k < 150; ++k) {
            model.step(state, config.dt, &meta);
            for (const auto& vs : state.valves) {
                CHECK(vs.position >= 0.0);
                CHECK(vs.position <= 1.0);
            }
        }
    }
}

TEST_CASE("a locked relief valve never opens except under its own fail_open") {
    auto config = default_monte_carlo();
    const auto lrv = config.scenario.valve_index("LRV");

    // Nominal locked phases: [1100, 1125) and [1200, 1250].
    Trial trial;
    TrialTelemetry tel;
    trial = run_trial(config, std::nullopt, 5, 0, &tel);
    for (std::int64_t k = 0; k < config.n_timesteps; ++k) {
        const double t = static_cast<double>(k) * config.dt;
        const double pos = tel.valve_positions(k, static_cast<Eigen::Index>(lrv));
        // Allow the closing stroke just after lockup engages.
        if ((t > 1101.0 && t < 1125.0) || t > 1201.0) CHECK(pos == 0.0);
    }

    AnomalyMeta fail;
    fail.class_id = 17;
    fail.component = "LRV";
    fail.mode = AnomalyMode::fail_open;
    fail.start_time = 1205.0;
    fail.end_time = 1210.0;
    fail.settings = {{"fail_open_fraction", 0.4}};
    TrialTelemetry tel2;
    run_trial(config, fail, 5, 0, &tel2);
    bool opened_while_locked = false;
    for (std::int64_t k = 0; k < config.n_timesteps; ++k) {
        const double t = static_cast<double>(k) * config.dt;
        if (t >= 1205.0 && t <= 1210.0 &&
            tel2.valve_positions(k, static_cast<Eigen::Index>(lrv)) > 0.0)
            opened_while_locked = true;
    }
    CHECK(opened_while_locked);
}

TEST_CASE("nominal ensemble disperses: no identical trials, positive sigma everywhere") {
    auto config = default_monte_carlo();
    const int n = 8;
    std::vector<Trial> trials;
    for (int i = 0; i < n; ++i) trials.push_back(run_trial(config, std::nullopt, 100 + i, i));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) CHECK(trials[i].values != trials[j].values);
    for (Eigen::Index c = 0; c < trials[0].values.cols(); ++c) {
        for (Eigen::Index t = 0; t < trials[0].values.rows(); t += 97) {
            double mean = 0;
            for (auto& tr : trials) mean += tr.values(t, c);
            mean /= n;
            double ss = 0;
            for (auto& tr : trials) ss += (tr.values(t, c) - mean) * (tr.values(t, c) - mean);
            CHECK(ss > 0.0);
        }
    }
}

TEST_CASE("tank valves actuate only in the valve-test and pre-launch phases") {
    auto config = default_monte_carlo();
    TrialTelemetry tel;
    run_trial(config, std::nullopt, 21, 0, &tel);
    for (const char* name : {"SOV-PT1", "SOV-PT2"}) {
        const auto vi = config.scenario.valve_index(name);
        for (std::int64_t k = 0; k < config.n_timesteps; ++k) {
            const double t = static_cast<double>(k) * config.dt;
            const bool allowed = (t >= 1100.0 && t <= 1126.0) || t >= 1200.0;
            if (!allowed) CHECK(tel.valve_positions(k, static_cast<Eigen::Index>(vi)) == 0.0);
        }
    }
}

TEST_CASE("relief logic keeps the tank inside the crack/reseal band during loading") {
    auto config = default_monte_carlo();
    Rng rng(8);
    for (int rep = 0; rep < 3; ++rep) {
        const std::uint64_t seed = 4000 + rng.next_u64() % 1000;
        Trial trial = run_trial(config, std::nullopt, seed, 0);
        // Recover this trial's drawn crack/reseal pressures.
        Rng replay(seed);
        SystemModel model(config.scenario, SystemModel::draw_variation(config.scenario, replay));
        const auto lrv = config.scenario.valve_index("LRV");
        const double crack = model.variation().crack_pressure[lrv];
        const double reseal = model.variation().reseal_pressure[lrv];
        const double p0 = trial.values(0, 4);
        // Slack: one substep of worst-case rise above the crack, and the
        // closing-stroke overshoot below the reseal at a fixed step.
        const double slack = 5e3;
        for (std::int64_t k = 0; k < config.n_timesteps; ++k) {
            const double t = static_cast<double>(k) * config.dt;
            if (t >= config.scenario.phases.loading_end) break;
            const double p = trial.values(k, 4);
            CHECK(p <= crack + slack);
            CHECK(p >= std::min(reseal, p0) - slack);
        }
    }
}

TEST_CASE("run_trial is deterministic per seed") {
    auto config = default_monte_carlo();
    const Trial a = run_trial(config, std::nullopt, 31337, 0);
    const Trial b = run_trial(config, std::nullopt, 31337, 0);
    CHECK(a.values == b.values);
    const Trial c = run_trial(config, std::nullopt, 31338, 0);
    CHECK(a.values != c.values);
}

TEST_CASE("fail_closed tank valves during pre-launch starve the tank below the nominal mean") {
    auto config = default_monte_carlo();
    AnomalyMeta meta;
    meta.class_id = 11;
    meta.component = "SOV-PT12";
    meta.mode = AnomalyMode::fail_closed;
    meta.start_time = 1202.0;
    meta.end_time = 1250.0;

    const int n = 12;
    const auto p_prop = 4;  // channel index
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(config.n_timesteps);
    for (int i = 0; i < n; ++i)
        mean += run_trial(config, std::nullopt, 9000 + i, i).values.col(p_prop);
    mean /= n;

    const Trial faulted = run_trial(config, meta, 9000, 0);
    for (std::int64_t k = 0; k < config.n_timesteps; ++k) {
        const double t = static_cast<double>(k) * config.dt;
        if (t >= 1210.0 && t <= 1250.0)  // past the divergence onset
            CHECK(faulted.values(k, p_prop) < mean[k]);
    }
}

TEST_CASE("draw_anomaly respects setting bounds and the late leak shift") {
    auto config = default_monte_carlo();
    const AnomalyClassSpec* leak = nullptr;
    for (const auto& c : config.classes)
        if (c.name == "sov_tow_internal_leak") leak = &c;
    REQUIRE(leak != nullptr);
    Rng rng(1);
    int late_seen = 0, early_seen = 0;
    for (int i = 0; i < 300; ++i) {
        const auto meta = draw_anomaly(*leak, config.scenario.phases, rng);
        const double log10_frac = std::log10(meta.settings.at("leak_fraction"));
        if (meta.start_time > 1000.0) {
            ++late_seen;
            CHECK(log10_frac >= -4.0);
            CHECK(log10_frac <= -3.0);
        } else {
            ++early_seen;
            CHECK(log10_frac >= -2.8);
            CHECK(log10_frac <= -1.8);
        }
        CHECK(meta.start_time >= leak->start_lo);
        CHECK(meta.end_time <= config.scenario.phases.sim_end);
        const double dur = meta.end_time - meta.start_time;
        CHECK(dur >= leak->duration_lo - 1e-9);
        CHECK(dur <= leak->duration_hi + 1e-9);
    }
    CHECK(late_seen > 0);
    CHECK(early_seen > 0);
}

TEST_CASE("impossible liquid schedule raises a fault naming the tank") {
    auto config = default_monte_carlo();
    config.scenario.liquid.final_volume = 25.0;  // exceeds the 20 m^3 tank
    config.scenario.liquid.rate_spread = 0.0;
    bool caught = false;
    try {
        run_trial(config, std::nullopt, 3, 0);
    } catch (const SimulationFault& fault) {
        caught = true;
        CHECK(fault.volume() == "prop_tank");
        CHECK(fault.time() > 0.0);
    }
    CHECK(caught);
}

TEST_CASE("generate_dataset honours the mixture edge cases") {
    auto config = default_monte_carlo();
    config.n_timesteps = 60;
    config.dt = 1250.0 / 2720.0;
    SUBCASE("all-nominal mixture") {
        config.nominal_fraction = 1.0;
        config.n_trials = 4;
        const auto dir = std::filesystem::temp_directory_path() / "mdetect_gen_nominal";
        std::filesystem::remove_all(dir);
        generate_dataset(config, dir, 1, "h");
        const auto ds = read_dataset(dir);
        CHECK(ds.trials.size() == 4);
        for (const auto& t : ds.trials) {
            CHECK(t.is_nominal());
            for (int c : t.labels.classes) CHECK(c == 0);
        }
        std::filesystem::remove_all(dir);
    }
    SUBCASE("empty dataset") {
        config.n_trials = 0;
        const auto dir = std::filesystem::temp_directory_path() / "mdetect_gen_empty";
        std::filesystem::remove_all(dir);
        const auto summary = generate_dataset(config, dir, 1, "h");
        CHECK(summary.n_written == 0);
        CHECK(read_dataset(dir).trials.empty());
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("differential band mode regulates a tank-to-tank pressure difference") {
    Scenario s;
    s.volumes = {
        {.name = "supply", .volume = 1.0, .init_pressure = 2e6, .init_temperature = 300.0,
         .boundary = true},
        {.name = "main", .volume = 0.5, .init_pressure = 4e5, .init_temperature = 300.0},
        {.name = "ref", .volume = 1.0, .init_pressure = 3e5, .init_temperature = 300.0,
         .boundary = true},
    };
    ValveSpec v;
    v.name = "S-DIFF";
    v.upstream = "supply";
    v.downstream = "main";
    v.full_area = 3e-5;
    v.band_mode = BandMode::differential;
    v.control_volume = "main";
    v.reference_volume = "ref";
    v.schedule = {{0.0, CommandMode::band, 2.0e5, 2.2e5}};
    s.valves = {v};
    s.sensors = {{"P_main", "main", SensorSpec::Quantity::pressure, 0.0}};

    SystemModel model(s, SystemModel::nominal_variation(s));
    auto state = model.initial_state();
    for (int k = 0; k < 400; ++k) model.step(state, 0.25);
    const double diff = model.pressure(state, 1) - model.pressure(state, 2);
    // Starts at 1e5 below the band, fills, then holds inside it.
    CHECK(diff >= 2.0e5 - 2e3);
    CHECK(diff <= 2.2e5 + 2e3);
}
