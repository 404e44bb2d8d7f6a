#include "mdetect/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"
#include "mdetect/parallel.hpp"

namespace fs = std::filesystem;

namespace mdetect::sim {

void PhaseSchedule::validate() const {
    if (!(0.0 < loading_end && loading_end < valve_test_end && valve_test_end < depress_end &&
          depress_end < sim_end))
        throw Error("PhaseSchedule: boundaries must be strictly increasing and end at sim_end");
}

void Scenario::validate() const {
    phases.validate();
    if (volumes.empty()) throw Error("Scenario: no volumes");
    if (substeps < 1) throw Error("Scenario: substeps must be >= 1");
    std::set<std::string> vnames;
    for (const auto& v : volumes) {
        if (!(v.volume > 0.0)) throw Error("Scenario: volume " + v.name + " must be positive");
        if (!(v.init_pressure > 0.0 && v.init_temperature > 0.0))
            throw Error("Scenario: volume " + v.name + " needs positive initial state");
        if (!vnames.insert(v.name).second) throw Error("Scenario: duplicate volume " + v.name);
    }
    for (const auto& v : valves) {
        volume_index(v.upstream);
        volume_index(v.downstream);
        if (!(v.full_area > 0.0)) throw Error("Scenario: valve " + v.name + " needs a positive area");
        if (!(v.stroke_time > 0.0))
            throw Error("Scenario: valve " + v.name + " needs a positive stroke time");
        if (v.kind == ValveKind::shutoff) {
            if (!v.control_volume.empty()) volume_index(v.control_volume);
            if (v.band_mode == BandMode::differential) volume_index(v.reference_volume);
            for (const auto& cmd : v.schedule)
                if (cmd.mode == CommandMode::band && !(cmd.band_low < cmd.band_high))
                    throw Error("Scenario: valve " + v.name + " band_low must be < band_high");
        } else {
            if (!(v.reseal_pressure < v.crack_pressure))
                throw Error("Scenario: valve " + v.name + " needs reseal < crack");
        }
    }
    for (const auto& s : sensors) volume_index(s.volume);
}

std::size_t Scenario::volume_index(const std::string& name) const {
    for (std::size_t i = 0; i < volumes.size(); ++i)
        if (volumes[i].name == name) return i;
    throw Error("Scenario: unknown volume '" + name + "'");
}

std::size_t Scenario::valve_index(const std::string& name) const {
    for (std::size_t i = 0; i < valves.size(); ++i)
        if (valves[i].name == name) return i;
    throw Error("Scenario: unknown valve '" + name + "'");
}

void MonteCarloConfig::validate() const {
    scenario.validate();
    if (n_trials < 0) throw Error("MonteCarloConfig: negative n_trials");
    if (!(nominal_fraction >= 0.0 && nominal_fraction <= 1.0))
        throw Error("MonteCarloConfig: nominal_fraction outside [0, 1]");
    if (!class_weights.empty() && class_weights.size() != classes.size())
        throw Error("MonteCarloConfig: class_weights size mismatch");
    for (double w : class_weights)
        if (w < 0.0) throw Error("MonteCarloConfig: negative class weight");
    if (n_timesteps < 2) throw Error("MonteCarloConfig: n_timesteps must be >= 2");
    if (!(dt > 0.0)) throw Error("MonteCarloConfig: dt must be positive");
    std::set<int> ids;
    for (const auto& c : classes) {
        if (c.class_id < 1) throw Error("MonteCarloConfig: class ids start at 1");
        if (!ids.insert(c.class_id).second)
            throw Error("MonteCarloConfig: duplicate class id " + std::to_string(c.class_id));
        component_valve_indices(scenario, c.component);
    }
}

std::vector<std::size_t> component_valve_indices(const Scenario& scenario,
                                                 const std::string& component) {
    if (component == "SOV-PT12")
        return {scenario.valve_index("SOV-PT1"), scenario.valve_index("SOV-PT2")};
    return {scenario.valve_index(component)};
}

double orifice_mass_flux(double p_up, double p_down, double t_up, const GasProperties& gas) {
    if (p_up <= 0.0 || t_up <= 0.0) return 0.0;
    const double r = p_down / p_up;
    if (r >= 1.0) return 0.0;
    const double g = gas.gamma;
    const double critical = std::pow(2.0 / (g + 1.0), g / (g - 1.0));
    if (r <= critical) {
        return p_up * std::sqrt(g / (gas.specific_gas_constant * t_up)) *
               std::pow(2.0 / (g + 1.0), (g + 1.0) / (2.0 * (g - 1.0)));
    }
    const double term = std::pow(r, 2.0 / g) - std::pow(r, (g + 1.0) / g);
    return p_up * std::sqrt(2.0 * g / (gas.specific_gas_constant * t_up * (g - 1.0)) *
                            std::max(term, 0.0));
}

TrialVariation SystemModel::draw_variation(const Scenario& scenario, Rng& rng) {
    TrialVariation v;
    v.init_pressure.reserve(scenario.volumes.size());
    v.init_temperature.reserve(scenario.volumes.size());
    for (const auto& vol : scenario.volumes) {
        v.init_pressure.push_back(
            vol.init_pressure_sigma > 0.0
                ? rng.bounded_normal(vol.init_pressure - 3.0 * vol.init_pressure_sigma,
                                     vol.init_pressure + 3.0 * vol.init_pressure_sigma)
                : vol.init_pressure);
        v.init_temperature.push_back(
            vol.init_temperature_sigma > 0.0
                ? rng.bounded_normal(vol.init_temperature - 3.0 * vol.init_temperature_sigma,
                                     vol.init_temperature + 3.0 * vol.init_temperature_sigma)
                : vol.init_temperature);
    }
    v.crack_pressure.resize(scenario.valves.size(), 0.0);
    v.reseal_pressure.resize(scenario.valves.size(), 0.0);
    for (std::size_t i = 0; i < scenario.valves.size(); ++i) {
        const auto& valve = scenario.valves[i];
        if (valve.kind != ValveKind::lockup_relief) continue;
        v.crack_pressure[i] =
            valve.crack_sigma > 0.0
                ? rng.bounded_normal(valve.crack_pressure - 3.0 * valve.crack_sigma,
                                     valve.crack_pressure + 3.0 * valve.crack_sigma)
                : valve.crack_pressure;
        v.reseal_pressure[i] =
            valve.reseal_sigma > 0.0
                ? rng.bounded_normal(valve.reseal_pressure - 3.0 * valve.reseal_sigma,
                                     valve.reseal_pressure + 3.0 * valve.reseal_sigma)
                : valve.reseal_pressure;
    }
    const double spread = scenario.liquid.rate_spread;
    const double final_volume = scenario.liquid.final_volume;
    v.liquid_final_volume =
        spread > 0.0 ? rng.bounded_normal(final_volume * (1.0 - 3.0 * spread),
                                          final_volume * (1.0 + 3.0 * spread))
                     : final_volume;
    return v;
}

TrialVariation SystemModel::nominal_variation(const Scenario& scenario) {
    TrialVariation v;
    for (const auto& vol : scenario.volumes) {
        v.init_pressure.push_back(vol.init_pressure);
        v.init_temperature.push_back(vol.init_temperature);
    }
    v.crack_pressure.resize(scenario.valves.size(), 0.0);
    v.reseal_pressure.resize(scenario.valves.size(), 0.0);
    for (std::size_t i = 0; i < scenario.valves.size(); ++i) {
        v.crack_pressure[i] = scenario.valves[i].crack_pressure;
        v.reseal_pressure[i] = scenario.valves[i].reseal_pressure;
    }
    v.liquid_final_volume = scenario.liquid.final_volume;
    return v;
}

SystemModel::SystemModel(Scenario scenario, TrialVariation variation)
    : scenario_(std::move(scenario)), variation_(std::move(variation)) {
    scenario_.validate();
    if (variation_.init_pressure.size() != scenario_.volumes.size() ||
        variation_.init_temperature.size() != scenario_.volumes.size() ||
        variation_.crack_pressure.size() != scenario_.valves.size())
        throw Error("SystemModel: variation does not match scenario");
    for (std::size_t i = 0; i < scenario_.valves.size(); ++i) {
        if (scenario_.valves[i].kind == ValveKind::lockup_relief &&
            !(variation_.reseal_pressure[i] < variation_.crack_pressure[i]))
            throw Error("SystemModel: drawn reseal >= crack for valve " + scenario_.valves[i].name);
    }
}

double SystemModel::liquid_volume_at(double time) const {
    const auto& l = scenario_.liquid;
    if (time <= l.start) return 0.0;
    const double f = std::min(1.0, (time - l.start) / (l.end - l.start));
    return variation_.liquid_final_volume * f;
}

SystemState SystemModel::initial_state() const {
    SystemState s;
    s.volumes.resize(scenario_.volumes.size());
    s.valves.resize(scenario_.valves.size());
    for (std::size_t i = 0; i < scenario_.volumes.size(); ++i) {
        const auto& spec = scenario_.volumes[i];
        auto& vs = s.volumes[i];
        vs.temperature = variation_.init_temperature[i];
        vs.liquid_volume = spec.has_liquid ? liquid_volume_at(0.0) : 0.0;
        const double gas_volume = spec.volume - vs.liquid_volume;
        vs.gas_mass = variation_.init_pressure[i] * gas_volume /
                      (scenario_.gas.specific_gas_constant * vs.temperature);
    }
    return s;
}

double SystemModel::pressure(const SystemState& state, std::size_t volume) const {
    const auto& spec = scenario_.volumes[volume];
    const auto& vs = state.volumes[volume];
    if (spec.boundary) return variation_.init_pressure[volume];
    const double gas_volume = spec.volume - vs.liquid_volume;
    return vs.gas_mass * scenario_.gas.specific_gas_constant * vs.temperature / gas_volume;
}

double SystemModel::sensor_value(const SystemState& state, const SensorSpec& sensor) const {
    const auto idx = scenario_.volume_index(sensor.volume);
    if (sensor.quantity == SensorSpec::Quantity::pressure) return pressure(state, idx);
    return scenario_.volumes[idx].boundary ? variation_.init_temperature[idx]
                                           : state.volumes[idx].temperature;
}

double SystemModel::total_internal_gas_mass(const SystemState& state) const {
    double total = 0.0;
    for (std::size_t i = 0; i < scenario_.volumes.size(); ++i)
        if (!scenario_.volumes[i].boundary) total += state.volumes[i].gas_mass;
    return total;
}

bool SystemModel::injection_applies(const AnomalyMeta* injection, double time,
                                    std::size_t valve) const {
    if (!injection) return false;
    if (time < injection->start_time || time > injection->end_time) return false;
    const auto targets = component_valve_indices(scenario_, injection->component);
    return std::find(targets.begin(), targets.end(), valve) != targets.end();
}

namespace {

double setting_or(const AnomalyMeta& meta, const std::string& key, double fallback) {
    auto it = meta.settings.find(key);
    return it == meta.settings.end() ? fallback : it->second;
}

const BandCommand* active_command(const ValveSpec& valve, double time) {
    const BandCommand* active = nullptr;
    for (const auto& cmd : valve.schedule) {
        if (cmd.time <= time) active = &cmd;
    }
    return active;
}

bool lock_active(const ValveSpec& valve, double time) {
    bool locked = false;
    for (const auto& [t, state] : valve.lock_schedule)
        if (t <= time) locked = state;
    return locked;
}

}  // namespace

void SystemModel::update_commands(SystemState& state, double time, const AnomalyMeta* injection,
                                  double dt) const {
    for (std::size_t vi = 0; vi < scenario_.valves.size(); ++vi) {
        const auto& valve = scenario_.valves[vi];
        auto& vs = state.valves[vi];
        const bool injected = injection_applies(injection, time, vi);

        bool command_open = false;
        if (valve.kind == ValveKind::shutoff) {
            const BandCommand* cmd = active_command(valve, time);
            if (!cmd || cmd->mode == CommandMode::forced_closed) {
                vs.band_open = false;
                command_open = false;
            } else if (cmd->mode == CommandMode::forced_open) {
                vs.band_open = true;
                command_open = true;
            } else {
                double band_low = cmd->band_low;
                double band_high = cmd->band_high;
                if (injected && injection->mode == AnomalyMode::band_drift) {
                    const double offset = setting_or(*injection, "band_offset", 0.0);
                    band_low += offset;
                    band_high += offset;
                }
                const std::string& ctrl =
                    valve.control_volume.empty() ? valve.downstream : valve.control_volume;
                double measured = pressure(state, scenario_.volume_index(ctrl));
                if (valve.band_mode == BandMode::differential)
                    measured -= pressure(state, scenario_.volume_index(valve.reference_volume));
                if (measured < band_low)
                    vs.band_open = true;
                else if (measured > band_high)
                    vs.band_open = false;
                command_open = vs.band_open;
            }
        } else {
            // Lockup relief valve: crack/reseal latch plus lock override.
            double crack = variation_.crack_pressure[vi];
            double reseal = variation_.reseal_pressure[vi];
            if (injected && injection->mode == AnomalyMode::high_crack)
                crack += setting_or(*injection, "crack_offset", 0.0);
            if (injected && injection->mode == AnomalyMode::low_reseal)
                reseal -= setting_or(*injection, "reseal_offset", 0.0);
            const double tank = pressure(state, scenario_.volume_index(valve.upstream));
            const bool was_open = vs.vent_open;
            if (tank >= crack)
                vs.vent_open = true;
            else if (tank <= reseal)
                vs.vent_open = false;
            const bool locked = lock_active(valve, time);
            command_open = vs.vent_open && !locked;
            if (!was_open && vs.vent_open && !locked) state.crack_times.push_back(time);
        }

        // Injection overrides and stroke dynamics.
        if (injected && injection->mode == AnomalyMode::fail_open) {
            vs.position = setting_or(*injection, "fail_open_fraction", 1.0);
            continue;
        }
        if (injected && injection->mode == AnomalyMode::fail_closed) {
            vs.position = 0.0;
            continue;
        }
        double open_time = valve.stroke_time;
        double close_time = valve.stroke_time;
        if (injected && injection->mode == AnomalyMode::slow_opening)
            open_time = std::max(open_time, setting_or(*injection, "opening_delay", open_time));
        if (injected && injection->mode == AnomalyMode::slow_closing)
            close_time = std::max(close_time, setting_or(*injection, "closing_delay", close_time));

        const double target = command_open ? 1.0 : 0.0;
        const double rate = target > vs.position ? dt / open_time : dt / close_time;
        const double delta = std::clamp(target - vs.position, -rate, rate);
        vs.position = std::clamp(vs.position + delta, 0.0, 1.0);
    }
}

void SystemModel::substep(SystemState& state, double dt, const AnomalyMeta* injection) const {
    const double time = state.time;
    update_commands(state, time, injection, dt);

    const auto& gas = scenario_.gas;
    const std::size_t n_volumes = scenario_.volumes.size();
    std::vector<double> dm(n_volumes, 0.0);
    std::vector<double> du(n_volumes, 0.0);

    auto apply_flow = [&](std::size_t up, std::size_t down, double area) {
        if (area <= 0.0) return;
        double p_up = pressure(state, up);
        double p_down = pressure(state, down);
        std::size_t from = up, to = down;
        if (p_down > p_up) {
            std::swap(from, to);
            std::swap(p_up, p_down);
        }
        const double t_up = scenario_.volumes[from].boundary
                                ? variation_.init_temperature[from]
                                : state.volumes[from].temperature;
        const double mdot = area * orifice_mass_flux(p_up, p_down, t_up, gas);
        if (mdot <= 0.0) return;
        const double h_up = gas.cp() * t_up;
        if (!scenario_.volumes[from].boundary) {
            dm[from] -= mdot;
            du[from] -= mdot * h_up;
        } else {
            state.boundary_inflow += mdot * dt;
        }
        if (!scenario_.volumes[to].boundary) {
            dm[to] += mdot;
            du[to] += mdot * h_up;
        } else {
            state.boundary_outflow += mdot * dt;
        }
    };

    for (std::size_t vi = 0; vi < scenario_.valves.size(); ++vi) {
        const auto& valve = scenario_.valves[vi];
        const auto up = scenario_.volume_index(valve.upstream);
        const auto down = scenario_.volume_index(valve.downstream);
        apply_flow(up, down,
                   state.valves[vi].position * valve.discharge_coeff * valve.full_area);
        if (injection_applies(injection, time, vi) &&
            injection->mode == AnomalyMode::internal_leak) {
            const double leak_fraction = setting_or(*injection, "leak_fraction", 0.0);
            apply_flow(up, down, leak_fraction * valve.discharge_coeff * valve.full_area);
        }
    }

    for (std::size_t i = 0; i < n_volumes; ++i) {
        const auto& spec = scenario_.volumes[i];
        if (spec.boundary) continue;
        auto& vs = state.volumes[i];
        double dv_gas = 0.0;
        if (spec.has_liquid) {
            const double next_liquid = liquid_volume_at(time + dt);
            dv_gas = -(next_liquid - vs.liquid_volume);
            if (next_liquid >= spec.volume)
                throw SimulationFault("liquid volume reached tank volume in " + spec.name,
                                      spec.name, time);
        }
        const double p = pressure(state, i);
        const double m_old = vs.gas_mass;
        const double u_old = m_old * gas.cv() * vs.temperature;
        const double m_new = m_old + dm[i] * dt;
        const double u_new = u_old + du[i] * dt - p * dv_gas;
        if (!(m_new > 0.0) || !std::isfinite(m_new) || !std::isfinite(u_new) || !(u_new > 0.0)) {
            std::ostringstream os;
            os << "simulation fault in volume " << spec.name << " at t=" << time
               << " (mass=" << m_new << ", energy=" << u_new << ")";
            throw SimulationFault(os.str(), spec.name, time);
        }
        vs.gas_mass = m_new;
        vs.temperature = u_new / (m_new * gas.cv());
        if (spec.has_liquid) vs.liquid_volume = liquid_volume_at(time + dt);
        if (!std::isfinite(vs.temperature) || vs.temperature <= 0.0)
            throw SimulationFault("non-physical temperature in volume " + spec.name, spec.name,
                                  time);
    }

    state.time = time + dt;
}

void SystemModel::step(SystemState& state, double dt, const AnomalyMeta* injection) const {
    if (!(dt > 0.0)) throw Error("SystemModel::step: dt must be positive");
    state.boundary_inflow = 0.0;
    state.boundary_outflow = 0.0;
    const int n = scenario_.substeps;
    const double h = dt / n;
    for (int k = 0; k < n; ++k) substep(state, h, injection);
}

AnomalyMeta draw_anomaly(const AnomalyClassSpec& spec, const PhaseSchedule& phases, Rng& rng) {
    AnomalyMeta meta;
    meta.class_id = spec.class_id;
    meta.component = spec.component;
    meta.mode = spec.mode;

    double duration;
    if (spec.duration == AnomalyClassSpec::Duration::whole_sim) {
        meta.start_time = 0.0;
        meta.end_time = phases.sim_end;
        duration = phases.sim_end;
    } else {
        duration = rng.bounded_normal(spec.duration_lo, spec.duration_hi);
        const double start_hi = std::min(spec.start_hi, phases.sim_end - duration);
        meta.start_time = rng.uniform(spec.start_lo, std::max(spec.start_lo, start_hi));
        meta.end_time = std::min(meta.start_time + duration, phases.sim_end);
    }

    double lo = spec.setting_lo;
    double hi = spec.setting_hi;
    if (std::isfinite(spec.late_setting_lo) && meta.start_time > spec.late_threshold) {
        lo = spec.late_setting_lo;
        hi = spec.late_setting_hi;
    }

    switch (spec.mode) {
        case AnomalyMode::fail_open:
            meta.settings["fail_open_fraction"] = rng.bounded_normal(lo, hi);
            break;
        case AnomalyMode::fail_closed:
            break;
        case AnomalyMode::slow_opening:
            meta.settings["opening_delay"] = rng.bounded_normal(lo, hi);
            break;
        case AnomalyMode::slow_closing:
            meta.settings["closing_delay"] = rng.bounded_normal(lo, hi);
            break;
        case AnomalyMode::internal_leak:
            meta.settings["leak_fraction"] = std::pow(10.0, rng.bounded_normal(lo, hi));
            break;
        case AnomalyMode::high_crack:
            meta.settings["crack_offset"] = rng.bounded_normal(lo, hi);
            break;
        case AnomalyMode::low_reseal:
            meta.settings["reseal_offset"] = rng.bounded_normal(lo, hi);
            break;
        case AnomalyMode::band_drift:
            meta.settings["band_offset"] = rng.bounded_normal(lo, hi);
            break;
        case AnomalyMode::synthetic:
            throw Error("draw_anomaly: synthetic mode is not a simulator class");
    }
    return meta;
}

Trial run_trial(const MonteCarloConfig& config, const std::optional<AnomalyMeta>& injection,
                std::uint64_t seed, std::int64_t trial_id, TrialTelemetry* telemetry) {
    Rng rng(seed);
    SystemModel model(config.scenario, SystemModel::draw_variation(config.scenario, rng));
    SystemState state = model.initial_state();

    const auto& sensors = config.scenario.sensors;
    Trial trial;
    trial.trial_id = trial_id;
    trial.values.resize(config.n_timesteps, static_cast<Eigen::Index>(sensors.size()));
    trial.labels.classes.assign(static_cast<std::size_t>(config.n_timesteps), 0);
    trial.labels.provenance = LabelProvenance::baseline;
    trial.anomaly = injection;

    if (telemetry)
        telemetry->valve_positions.resize(config.n_timesteps,
                                          static_cast<Eigen::Index>(config.scenario.valves.size()));

    const AnomalyMeta* meta = injection ? &*injection : nullptr;
    for (std::int64_t k = 0; k < config.n_timesteps; ++k) {
        const double t = static_cast<double>(k) * config.dt;
        for (std::size_t s = 0; s < sensors.size(); ++s) {
            double value = model.sensor_value(state, sensors[s]);
            if (sensors[s].noise_sigma > 0.0) value += sensors[s].noise_sigma * rng.normal();
            trial.values(k, static_cast<Eigen::Index>(s)) = value;
        }
        if (telemetry)
            for (std::size_t v = 0; v < state.valves.size(); ++v)
                telemetry->valve_positions(k, static_cast<Eigen::Index>(v)) =
                    state.valves[v].position;
        if (meta && t >= meta->start_time && t <= meta->end_time)
            trial.labels.classes[static_cast<std::size_t>(k)] = meta->class_id;
        if (k + 1 < config.n_timesteps) model.step(state, config.dt, meta);
    }
    if (telemetry) telemetry->crack_times = state.crack_times;
    return trial;
}

DatasetManifest sim_manifest(const MonteCarloConfig& config) {
    DatasetManifest m;
    m.generator = Generator::sim;
    m.n_timesteps = config.n_timesteps;
    m.dt = config.dt;
    for (const auto& s : config.scenario.sensors) m.parameter_names.push_back(s.name);
    int max_class = 0;
    for (const auto& c : config.classes) max_class = std::max(max_class, c.class_id);
    m.class_names.assign(static_cast<std::size_t>(max_class) + 1, "");
    m.class_names[0] = "nominal";
    for (const auto& c : config.classes) m.class_names[static_cast<std::size_t>(c.class_id)] = c.name;
    for (std::size_t i = 0; i < m.class_names.size(); ++i)
        if (m.class_names[i].empty()) m.class_names[i] = "unused_" + std::to_string(i);
    m.seed = config.base_seed;
    return m;
}

GenerationSummary generate_dataset(const MonteCarloConfig& config, const fs::path& out_dir,
                                   unsigned jobs, const std::string& config_hash) {
    config.validate();
    DatasetManifest manifest = sim_manifest(config);
    manifest.config_hash = config_hash;

    std::vector<std::optional<Trial>> slots(static_cast<std::size_t>(config.n_trials));
    std::vector<std::string> errors(static_cast<std::size_t>(config.n_trials));

    parallel_for(static_cast<std::size_t>(config.n_trials), jobs, [&](std::size_t i) {
        const auto trial_id = static_cast<std::int64_t>(i);
        const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(trial_id);
        Rng rng(splitmix64(seed) ^ 0x616e6f6d616c79ULL);  // anomaly-draw stream
        std::optional<AnomalyMeta> injection;
        const bool nominal =
            config.classes.empty() || rng.uniform() < config.nominal_fraction;
        if (!nominal) {
            std::vector<double> weights = config.class_weights;
            if (weights.empty()) weights.assign(config.classes.size(), 1.0);
            const auto& spec = config.classes[rng.categorical(weights)];
            injection = draw_anomaly(spec, config.scenario.phases, rng);
        }
        try {
            slots[i] = run_trial(config, injection, seed, trial_id);
        } catch (const SimulationFault& fault) {
            errors[i] = fault.what();
        }
    });

    GenerationSummary summary;
    std::vector<Trial> trials;
    trials.reserve(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i])
            trials.push_back(std::move(*slots[i]));
        else if (!errors[i].empty())
            summary.faults.emplace_back(static_cast<std::int64_t>(i), errors[i]);
    }
    summary.n_written = static_cast<std::int64_t>(trials.size());
    write_dataset(manifest, trials, out_dir);

    if (!summary.faults.empty()) {
        nlohmann::json jfaults = nlohmann::json::object();
        for (const auto& [id, msg] : summary.faults) jfaults[std::to_string(id)] = msg;
        write_text_file(out_dir / "faults.json", jfaults.dump(2) + "\n");
    }
    return summary;
}

}  // namespace mdetect::sim
