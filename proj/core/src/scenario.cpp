#include <cmath>

#include <json.hpp>

#include "mdetect/error.hpp"
#include "mdetect/scenario_json.hpp"
#include "mdetect/sim.hpp"

using nlohmann::json;

namespace mdetect::sim {

Scenario default_scenario() {
    Scenario s;

    s.volumes = {
        // The detector needs the nominal ensemble to cover event-timing
        // jitter densely; narrow spreads make held-out trials land outside
        // the sampled span and false-positive.
        {.name = "source", .volume = 1.0, .init_pressure = 30.0e6, .init_temperature = 290.0,
         .init_pressure_sigma = 150e3, .init_temperature_sigma = 2.0, .boundary = true},
        {.name = "tower", .volume = 2.0, .init_pressure = 21.5e6, .init_temperature = 290.0,
         .init_pressure_sigma = 150e3, .init_temperature_sigma = 2.0},
        {.name = "helium_bottle", .volume = 1.0, .init_pressure = 18.0e6, .init_temperature = 285.0,
         .init_pressure_sigma = 120e3, .init_temperature_sigma = 2.0},
        {.name = "prop_tank", .volume = 20.0, .init_pressure = 345e3, .init_temperature = 250.0,
         .init_pressure_sigma = 6e3, .init_temperature_sigma = 2.5, .has_liquid = true},
        {.name = "ambient", .volume = 1.0, .init_pressure = 101325.0, .init_temperature = 288.0,
         .init_pressure_sigma = 100.0, .init_temperature_sigma = 0.5, .boundary = true},
    };

    ValveSpec tow;
    tow.name = "SOV-TOW";
    tow.upstream = "source";
    tow.downstream = "tower";
    tow.full_area = 1.2e-5;
    tow.control_volume = "tower";
    tow.schedule = {{0.0, CommandMode::band, 22.0e6, 24.0e6}};

    ValveSpec hb;
    hb.name = "SOV-HB";
    hb.upstream = "tower";
    hb.downstream = "helium_bottle";
    hb.full_area = 2.0e-5;
    hb.control_volume = "helium_bottle";
    hb.schedule = {{0.0, CommandMode::band, 18.5e6, 19.5e6}};

    // Tank pressurization valves: closed through loading, a band hold for the
    // valve test, then stepped pre-launch bands.
    ValveSpec pt1;
    pt1.name = "SOV-PT1";
    pt1.upstream = "helium_bottle";
    pt1.downstream = "prop_tank";
    pt1.full_area = 2.0e-6;
    pt1.control_volume = "prop_tank";
    pt1.schedule = {
        {0.0, CommandMode::forced_closed, 0.0, 0.0},
        {1100.0, CommandMode::band, 380e3, 400e3},
        {1125.0, CommandMode::forced_closed, 0.0, 0.0},
        {1200.0, CommandMode::band, 450e3, 470e3},
        {1216.666666666666667, CommandMode::band, 550e3, 570e3},
        {1233.333333333333333, CommandMode::band, 650e3, 670e3},
    };
    ValveSpec pt2 = pt1;
    pt2.name = "SOV-PT2";

    ValveSpec lrv;
    lrv.name = "LRV";
    lrv.kind = ValveKind::lockup_relief;
    lrv.upstream = "prop_tank";
    lrv.downstream = "ambient";
    lrv.full_area = 7.1e-4;
    lrv.stroke_time = 0.05;
    lrv.crack_pressure = 360e3;
    lrv.reseal_pressure = 335e3;
    lrv.crack_sigma = 2000.0;
    lrv.reseal_sigma = 2000.0;
    lrv.lock_schedule = {{0.0, false}, {1100.0, true}, {1125.0, false}, {1200.0, true}};

    s.valves = {tow, hb, pt1, pt2, lrv};

    s.sensors = {
        {"P_tower", "tower", SensorSpec::Quantity::pressure, 4500.0},
        {"T_tower", "tower", SensorSpec::Quantity::temperature, 0.05},
        {"P_heb", "helium_bottle", SensorSpec::Quantity::pressure, 3800.0},
        {"T_heb", "helium_bottle", SensorSpec::Quantity::temperature, 0.05},
        {"P_prop", "prop_tank", SensorSpec::Quantity::pressure, 70.0},
        {"T_prop", "prop_tank", SensorSpec::Quantity::temperature, 0.05},
        {"P_source", "source", SensorSpec::Quantity::pressure, 6000.0},
    };
    return s;
}

namespace {

AnomalyClassSpec make_class(int id, std::string name, std::string component, AnomalyMode mode,
                            AnomalyClassSpec::Duration duration, double lo, double hi,
                            double start_lo, double start_hi, double dur_lo = 0.5,
                            double dur_hi = 3.0) {
    AnomalyClassSpec c;
    c.class_id = id;
    c.name = std::move(name);
    c.component = std::move(component);
    c.mode = mode;
    c.duration = duration;
    c.setting_lo = lo;
    c.setting_hi = hi;
    c.start_lo = start_lo;
    c.start_hi = start_hi;
    c.duration_lo = dur_lo;
    c.duration_hi = dur_hi;
    return c;
}

}  // namespace

std::vector<AnomalyClassSpec> default_class_roster(const PhaseSchedule& phases) {
    using D = AnomalyClassSpec::Duration;
    const double end = phases.sim_end;
    std::vector<AnomalyClassSpec> r;

    auto add_group = [&](int base, const std::string& prefix, const std::string& component,
                         double fo_lo, double fo_hi, double so_lo, double so_hi, double sc_lo,
                         double sc_hi) {
        r.push_back(make_class(base + 0, prefix + "_fail_closed", component,
                               AnomalyMode::fail_closed, D::short_lived, 0, 0, 50.0, end - 5.0));
        r.push_back(make_class(base + 1, prefix + "_fail_open", component, AnomalyMode::fail_open,
                               D::short_lived, fo_lo, fo_hi, 50.0, end - 5.0));
        r.push_back(make_class(base + 2, prefix + "_internal_leak", component,
                               AnomalyMode::internal_leak, D::medium, 0, 0, 50.0, 1120.0, 40.0,
                               100.0));
        r.push_back(make_class(base + 3, prefix + "_slow_opening", component,
                               AnomalyMode::slow_opening, D::whole_sim, so_lo, so_hi, 0, 0));
        r.push_back(make_class(base + 4, prefix + "_slow_closing", component,
                               AnomalyMode::slow_closing, D::whole_sim, sc_lo, sc_hi, 0, 0));
    };

    add_group(1, "sov_tow", "SOV-TOW", 0.1, 0.3, 0.1, 0.25, 5.0, 10.0);
    add_group(6, "sov_hb", "SOV-HB", 0.1, 0.3, 0.1, 0.25, 1.0, 2.5);
    add_group(11, "sov_pt12", "SOV-PT12", 0.1, 0.3, 0.025, 0.1, 1.5, 3.0);

    // Leak-rate bounds shift once the start time passes 1000 s.
    r[2].setting_lo = -2.8;
    r[2].setting_hi = -1.8;
    r[2].late_setting_lo = -4.0;
    r[2].late_setting_hi = -3.0;
    r[7].setting_lo = -2.3;
    r[7].setting_hi = -1.7;
    r[7].late_setting_lo = -3.0;
    r[7].late_setting_hi = -2.0;
    r[12].setting_lo = -2.52;
    r[12].setting_hi = -2.0;

    r.push_back(make_class(16, "lrv_fail_closed", "LRV", AnomalyMode::fail_closed, D::short_lived,
                           0, 0, 50.0, 1090.0));
    r.push_back(make_class(17, "lrv_fail_open", "LRV", AnomalyMode::fail_open, D::short_lived, 0.1,
                           0.5, 50.0, 1090.0));
    r.push_back(make_class(18, "lrv_internal_leak", "LRV", AnomalyMode::internal_leak, D::whole_sim,
                           -2.0, -1.4, 0, 0));
    r.push_back(make_class(19, "lrv_high_crack", "LRV", AnomalyMode::high_crack, D::whole_sim,
                           8e3, 15e3, 0, 0));
    r.push_back(make_class(20, "lrv_low_reseal", "LRV", AnomalyMode::low_reseal, D::whole_sim,
                           8e3, 15e3, 0, 0));
    r.push_back(make_class(21, "lrv_slow_opening", "LRV", AnomalyMode::slow_opening, D::whole_sim,
                           1.0, 3.0, 0, 0));
    r.push_back(make_class(22, "lrv_slow_closing", "LRV", AnomalyMode::slow_closing, D::whole_sim,
                           5.5, 7.5, 0, 0));
    r.push_back(make_class(23, "sov_hb_band_drift", "SOV-HB", AnomalyMode::band_drift, D::whole_sim,
                           4e5, 8e5, 0, 0));
    r.push_back(make_class(24, "sov_pt12_band_drift", "SOV-PT12", AnomalyMode::band_drift,
                           D::whole_sim, 2e4, 4e4, 0, 0));
    return r;
}

MonteCarloConfig default_monte_carlo() {
    MonteCarloConfig c;
    c.scenario = default_scenario();
    c.classes = default_class_roster(c.scenario.phases);
    return c;
}

namespace {

std::string to_string(CommandMode m) {
    switch (m) {
        case CommandMode::forced_closed: return "forced_closed";
        case CommandMode::forced_open: return "forced_open";
        case CommandMode::band: return "band";
    }
    throw Error("invalid CommandMode");
}

CommandMode command_mode_from_string(const std::string& s) {
    if (s == "forced_closed") return CommandMode::forced_closed;
    if (s == "forced_open") return CommandMode::forced_open;
    if (s == "band") return CommandMode::band;
    throw Error("unknown command mode '" + s + "'");
}

std::string to_string(AnomalyClassSpec::Duration d) {
    switch (d) {
        case AnomalyClassSpec::Duration::short_lived: return "short";
        case AnomalyClassSpec::Duration::medium: return "medium";
        case AnomalyClassSpec::Duration::whole_sim: return "whole_sim";
    }
    throw Error("invalid Duration");
}

AnomalyClassSpec::Duration duration_from_string(const std::string& s) {
    if (s == "short") return AnomalyClassSpec::Duration::short_lived;
    if (s == "medium") return AnomalyClassSpec::Duration::medium;
    if (s == "whole_sim") return AnomalyClassSpec::Duration::whole_sim;
    throw Error("unknown duration kind '" + s + "'");
}

json volume_to_json(const VolumeSpec& v) {
    return json{{"name", v.name},
                {"volume", v.volume},
                {"init_pressure", v.init_pressure},
                {"init_temperature", v.init_temperature},
                {"init_pressure_sigma", v.init_pressure_sigma},
                {"init_temperature_sigma", v.init_temperature_sigma},
                {"boundary", v.boundary},
                {"has_liquid", v.has_liquid}};
}

VolumeSpec volume_from_json(const json& j) {
    VolumeSpec v;
    v.name = j.at("name").get<std::string>();
    v.volume = j.at("volume").get<double>();
    v.init_pressure = j.at("init_pressure").get<double>();
    v.init_temperature = j.at("init_temperature").get<double>();
    v.init_pressure_sigma = j.value("init_pressure_sigma", 0.0);
    v.init_temperature_sigma = j.value("init_temperature_sigma", 0.0);
    v.boundary = j.value("boundary", false);
    v.has_liquid = j.value("has_liquid", false);
    return v;
}

json valve_to_json(const ValveSpec& v) {
    json j{{"name", v.name},
           {"kind", v.kind == ValveKind::shutoff ? "shutoff" : "lockup_relief"},
           {"upstream", v.upstream},
           {"downstream", v.downstream},
           {"full_area", v.full_area},
           {"discharge_coeff", v.discharge_coeff},
           {"stroke_time", v.stroke_time}};
    if (v.kind == ValveKind::shutoff) {
        j["band_mode"] = v.band_mode == BandMode::absolute ? "absolute" : "differential";
        j["control_volume"] = v.control_volume;
        j["reference_volume"] = v.reference_volume;
        json sched = json::array();
        for (const auto& c : v.schedule)
            sched.push_back(json{{"time", c.time},
                                 {"mode", to_string(c.mode)},
                                 {"band_low", c.band_low},
                                 {"band_high", c.band_high}});
        j["schedule"] = sched;
    } else {
        j["crack_pressure"] = v.crack_pressure;
        j["reseal_pressure"] = v.reseal_pressure;
        j["crack_sigma"] = v.crack_sigma;
        j["reseal_sigma"] = v.reseal_sigma;
        json locks = json::array();
        for (const auto& [t, locked] : v.lock_schedule)
            locks.push_back(json{{"time", t}, {"locked", locked}});
        j["lock_schedule"] = locks;
    }
    return j;
}

ValveSpec valve_from_json(const json& j) {
    ValveSpec v;
    v.name = j.at("name").get<std::string>();
    v.kind = j.at("kind").get<std::string>() == "shutoff" ? ValveKind::shutoff
                                                          : ValveKind::lockup_relief;
    v.upstream = j.at("upstream").get<std::string>();
    v.downstream = j.at("downstream").get<std::string>();
    v.full_area = j.at("full_area").get<double>();
    v.discharge_coeff = j.value("discharge_coeff", 0.8);
    v.stroke_time = j.value("stroke_time", 0.02);
    if (v.kind == ValveKind::shutoff) {
        v.band_mode = j.value("band_mode", std::string("absolute")) == "differential"
                          ? BandMode::differential
                          : BandMode::absolute;
        v.control_volume = j.value("control_volume", std::string());
        v.reference_volume = j.value("reference_volume", std::string());
        for (const auto& c : j.value("schedule", json::array())) {
            BandCommand cmd;
            cmd.time = c.at("time").get<double>();
            cmd.mode = command_mode_from_string(c.at("mode").get<std::string>());
            cmd.band_low = c.value("band_low", 0.0);
            cmd.band_high = c.value("band_high", 0.0);
            v.schedule.push_back(cmd);
        }
    } else {
        v.crack_pressure = j.at("crack_pressure").get<double>();
        v.reseal_pressure = j.at("reseal_pressure").get<double>();
        v.crack_sigma = j.value("crack_sigma", 0.0);
        v.reseal_sigma = j.value("reseal_sigma", 0.0);
        for (const auto& c : j.value("lock_schedule", json::array()))
            v.lock_schedule.emplace_back(c.at("time").get<double>(),
                                         c.at("locked").get<bool>());
    }
    return v;
}

json class_to_json(const AnomalyClassSpec& c) {
    json j{{"class_id", c.class_id},
           {"name", c.name},
           {"component", c.component},
           {"mode", mdetect::to_string(c.mode)},
           {"duration", to_string(c.duration)},
           {"setting_lo", c.setting_lo},
           {"setting_hi", c.setting_hi},
           {"start_lo", c.start_lo},
           {"start_hi", c.start_hi},
           {"duration_lo", c.duration_lo},
           {"duration_hi", c.duration_hi},
           {"late_threshold", c.late_threshold}};
    if (std::isfinite(c.late_setting_lo)) {
        j["late_setting_lo"] = c.late_setting_lo;
        j["late_setting_hi"] = c.late_setting_hi;
    }
    return j;
}

AnomalyClassSpec class_from_json(const json& j) {
    AnomalyClassSpec c;
    c.class_id = j.at("class_id").get<int>();
    c.name = j.at("name").get<std::string>();
    c.component = j.at("component").get<std::string>();
    c.mode = anomaly_mode_from_string(j.at("mode").get<std::string>());
    c.duration = duration_from_string(j.at("duration").get<std::string>());
    c.setting_lo = j.value("setting_lo", 0.0);
    c.setting_hi = j.value("setting_hi", 0.0);
    c.start_lo = j.value("start_lo", 0.0);
    c.start_hi = j.value("start_hi", 0.0);
    c.duration_lo = j.value("duration_lo", 0.5);
    c.duration_hi = j.value("duration_hi", 3.0);
    c.late_threshold = j.value("late_threshold", 1000.0);
    if (j.contains("late_setting_lo")) {
        c.late_setting_lo = j.at("late_setting_lo").get<double>();
        c.late_setting_hi = j.at("late_setting_hi").get<double>();
    }
    return c;
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["gas"] = json{{"specific_gas_constant", s.gas.specific_gas_constant}, {"gamma", s.gas.gamma}};
    j["volumes"] = json::array();
    for (const auto& v : s.volumes) j["volumes"].push_back(volume_to_json(v));
    j["valves"] = json::array();
    for (const auto& v : s.valves) j["valves"].push_back(valve_to_json(v));
    j["liquid"] = json{{"start", s.liquid.start},
                       {"end", s.liquid.end},
                       {"final_volume", s.liquid.final_volume},
                       {"rate_spread", s.liquid.rate_spread}};
    j["phases"] = json{{"loading_end", s.phases.loading_end},
                       {"valve_test_end", s.phases.valve_test_end},
                       {"depress_end", s.phases.depress_end},
                       {"sim_end", s.phases.sim_end}};
    j["sensors"] = json::array();
    for (const auto& sensor : s.sensors)
        j["sensors"].push_back(json{
            {"name", sensor.name},
            {"volume", sensor.volume},
            {"quantity",
             sensor.quantity == SensorSpec::Quantity::pressure ? "pressure" : "temperature"},
            {"noise_sigma", sensor.noise_sigma}});
    j["substeps"] = s.substeps;
    return j;
}

Scenario scenario_from_json(const json& j) {
    Scenario s;
    if (j.contains("gas")) {
        s.gas.specific_gas_constant = j["gas"].value("specific_gas_constant", 2077.1);
        s.gas.gamma = j["gas"].value("gamma", 5.0 / 3.0);
    }
    for (const auto& v : j.at("volumes")) s.volumes.push_back(volume_from_json(v));
    for (const auto& v : j.at("valves")) s.valves.push_back(valve_from_json(v));
    if (j.contains("liquid")) {
        s.liquid.start = j["liquid"].value("start", 0.0);
        s.liquid.end = j["liquid"].value("end", 1100.0);
        s.liquid.final_volume = j["liquid"].value("final_volume", 17.0);
        s.liquid.rate_spread = j["liquid"].value("rate_spread", 0.02);
    }
    if (j.contains("phases")) {
        s.phases.loading_end = j["phases"].value("loading_end", 1100.0);
        s.phases.valve_test_end = j["phases"].value("valve_test_end", 1125.0);
        s.phases.depress_end = j["phases"].value("depress_end", 1200.0);
        s.phases.sim_end = j["phases"].value("sim_end", 1250.0);
    }
    for (const auto& sensor : j.at("sensors")) {
        SensorSpec spec;
        spec.name = sensor.at("name").get<std::string>();
        spec.volume = sensor.at("volume").get<std::string>();
        spec.quantity = sensor.at("quantity").get<std::string>() == "temperature"
                            ? SensorSpec::Quantity::temperature
                            : SensorSpec::Quantity::pressure;
        spec.noise_sigma = sensor.value("noise_sigma", 0.0);
        s.sensors.push_back(spec);
    }
    s.substeps = j.value("substeps", 8);
    return s;
}

}  // namespace

std::string monte_carlo_to_json_string(const MonteCarloConfig& config, int indent) {
    json j;
    j["n_trials"] = config.n_trials;
    j["base_seed"] = config.base_seed;
    j["nominal_fraction"] = config.nominal_fraction;
    j["n_timesteps"] = config.n_timesteps;
    j["dt"] = config.dt;
    j["classes"] = json::array();
    for (const auto& c : config.classes) j["classes"].push_back(class_to_json(c));
    j["class_weights"] = config.class_weights;
    j["scenario"] = scenario_to_json(config.scenario);
    return j.dump(indent);
}

MonteCarloConfig monte_carlo_from_json_string(const std::string& text) {
    const json j = json::parse(text);
    MonteCarloConfig c;
    c.n_trials = j.value("n_trials", std::int64_t{300});
    c.base_seed = j.value("base_seed", std::uint64_t{42});
    c.nominal_fraction = j.value("nominal_fraction", 0.35);
    c.n_timesteps = j.value("n_timesteps", std::int64_t{2721});
    c.dt = j.value("dt", 1250.0 / 2720.0);
    if (j.contains("classes"))
        for (const auto& cj : j["classes"]) c.classes.push_back(class_from_json(cj));
    if (j.contains("class_weights"))
        c.class_weights = j["class_weights"].get<std::vector<double>>();
    if (j.contains("scenario"))
        c.scenario = scenario_from_json(j["scenario"]);
    else
        c.scenario = default_scenario();
    if (c.classes.empty()) c.classes = default_class_roster(c.scenario.phases);
    return c;
}

}  // namespace mdetect::sim
