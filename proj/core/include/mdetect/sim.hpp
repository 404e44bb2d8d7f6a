#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdetect/dataset.hpp"
#include "mdetect/rng.hpp"

namespace mdetect::sim {

struct GasProperties {
    double specific_gas_constant = 2077.1;  // J/(kg K), helium
    double gamma = 5.0 / 3.0;

    double cp() const { return gamma * specific_gas_constant / (gamma - 1.0); }
    double cv() const { return specific_gas_constant / (gamma - 1.0); }
};

/// A lumped gas volume. Boundary volumes hold fixed pressure/temperature
/// and act as infinite reservoirs.
struct VolumeSpec {
    std::string name;
    double volume = 1.0;  // m^3
    double init_pressure = 1e5;
    double init_temperature = 288.0;
    double init_pressure_sigma = 0.0;     // 3-sigma-truncated normal IC spread
    double init_temperature_sigma = 0.0;
    bool boundary = false;
    bool has_liquid = false;  // receives the propellant loading ramp
};

enum class CommandMode { forced_closed, forced_open, band };

/// One step of a valve command timeline, active from `time` until the next
/// entry. Band commands hold the control pressure inside [band_low, band_high]
/// by cycling the valve (fill logic: open below the band, close above it).
struct BandCommand {
    double time = 0.0;
    CommandMode mode = CommandMode::forced_closed;
    double band_low = 0.0;
    double band_high = 0.0;
};

enum class ValveKind { shutoff, lockup_relief };
enum class BandMode { absolute, differential };

struct ValveSpec {
    std::string name;
    ValveKind kind = ValveKind::shutoff;
    std::string upstream;
    std::string downstream;
    double full_area = 1e-5;  // m^2
    double discharge_coeff = 0.8;
    double stroke_time = 0.02;  // s for a full 0->1 stroke

    // shutoff valves
    BandMode band_mode = BandMode::absolute;
    std::string control_volume;      // measured volume (defaults to downstream)
    std::string reference_volume;    // differential mode: control - reference
    std::vector<BandCommand> schedule;

    // lockup relief valves
    double crack_pressure = 0.0;
    double reseal_pressure = 0.0;
    double crack_sigma = 0.0;
    double reseal_sigma = 0.0;
    std::vector<std::pair<double, bool>> lock_schedule;  // (time, locked)
};

/// Linear liquid loading ramp for the propellant tank ullage.
struct LiquidLoad {
    double start = 0.0;
    double end = 1100.0;
    double final_volume = 17.0;       // m^3 at the end of the ramp
    double rate_spread = 0.04;        // sigma as a fraction of final_volume
};

struct PhaseSchedule {
    double loading_end = 1100.0;
    double valve_test_end = 1125.0;
    double depress_end = 1200.0;
    double sim_end = 1250.0;

    void validate() const;
};

/// A sensor channel: pressure or temperature of a named volume, with
/// additive Gaussian measurement noise drawn per timestep.
struct SensorSpec {
    std::string name;
    std::string volume;
    enum class Quantity { pressure, temperature } quantity = Quantity::pressure;
    double noise_sigma = 0.0;  // absolute units (Pa or K)
};

struct Scenario {
    GasProperties gas;
    std::vector<VolumeSpec> volumes;
    std::vector<ValveSpec> valves;
    LiquidLoad liquid;
    PhaseSchedule phases;
    std::vector<SensorSpec> sensors;
    int substeps = 8;

    void validate() const;
    std::size_t volume_index(const std::string& name) const;
    std::size_t valve_index(const std::string& name) const;
};

/// How one anomaly class is drawn. `component` names a valve or the
/// "SOV-PT12" pair; mode-specific setting ranges feed bounded-normal draws.
struct AnomalyClassSpec {
    int class_id = 1;
    std::string name;
    std::string component;
    AnomalyMode mode = AnomalyMode::fail_open;
    enum class Duration { short_lived, medium, whole_sim } duration = Duration::short_lived;

    double setting_lo = 0.0;  // primary setting range (log10 space for leaks)
    double setting_hi = 0.0;
    // Leak bounds shift for start times past late_threshold (Table-style
    // time dependence); NaN disables the shift.
    double late_setting_lo = std::numeric_limits<double>::quiet_NaN();
    double late_setting_hi = std::numeric_limits<double>::quiet_NaN();
    double late_threshold = 1000.0;

    double start_lo = 0.0;
    double start_hi = 0.0;
    double duration_lo = 0.5;  // s, short_lived / medium only
    double duration_hi = 3.0;
};

struct MonteCarloConfig {
    std::int64_t n_trials = 300;
    std::uint64_t base_seed = 42;
    double nominal_fraction = 0.35;
    std::vector<AnomalyClassSpec> classes;
    std::vector<double> class_weights;  // aligned with classes; empty = uniform
    Scenario scenario;
    std::int64_t n_timesteps = 2721;
    double dt = 1250.0 / 2720.0;

    void validate() const;
};

/// Ground-stage pressurization scenario: source -> tower -> helium bottle
/// -> prop tank chain with a lockup relief valve venting to ambient.
Scenario default_scenario();
/// Full 24-class roster (component x mode grid) with library setting ranges.
std::vector<AnomalyClassSpec> default_class_roster(const PhaseSchedule& phases);
MonteCarloConfig default_monte_carlo();

struct VolumeState {
    double gas_mass = 0.0;
    double temperature = 0.0;
    double liquid_volume = 0.0;
};

struct ValveState {
    double position = 0.0;
    bool band_open = false;  // band logic latch
    bool vent_open = false;  // relief crack/reseal latch
};

struct SystemState {
    double time = 0.0;
    std::vector<VolumeState> volumes;
    std::vector<ValveState> valves;
    // Diagnostics accumulated by the last step() call.
    double boundary_inflow = 0.0;   // kg entering internal volumes from boundaries
    double boundary_outflow = 0.0;  // kg leaving internal volumes to boundaries
    std::vector<double> crack_times;  // relief-valve crack events so far
};

/// Deterministic per-trial parameter draws (initial conditions, crack and
/// reseal pressures, loading rate).
struct TrialVariation {
    std::vector<double> init_pressure;     // per volume
    std::vector<double> init_temperature;  // per volume
    std::vector<double> crack_pressure;    // per valve (relief only)
    std::vector<double> reseal_pressure;
    double liquid_final_volume = 0.0;
};

/// Fixed-step integrator over one scenario instance.
class SystemModel {
  public:
    SystemModel(Scenario scenario, TrialVariation variation);

    /// Variation drawn from rng with the scenario's spreads.
    static TrialVariation draw_variation(const Scenario& scenario, Rng& rng);
    /// Variation pinned to the scenario means (no dispersion).
    static TrialVariation nominal_variation(const Scenario& scenario);

    SystemState initial_state() const;

    /// Advances by dt using scenario.substeps internal substeps. Applies the
    /// injection while state.time is inside [start_time, end_time]. Throws
    /// SimulationFault on negative mass or non-finite state.
    void step(SystemState& state, double dt, const AnomalyMeta* injection = nullptr) const;

    double pressure(const SystemState& state, std::size_t volume) const;
    double sensor_value(const SystemState& state, const SensorSpec& sensor) const;
    double total_internal_gas_mass(const SystemState& state) const;
    double liquid_volume_at(double time) const;

    const Scenario& scenario() const { return scenario_; }
    const TrialVariation& variation() const { return variation_; }

  private:
    struct LeakPath {
        std::size_t valve = 0;
        double area = 0.0;
    };

    void substep(SystemState& state, double dt, const AnomalyMeta* injection) const;
    void update_commands(SystemState& state, double time, const AnomalyMeta* injection,
                         double dt) const;
    bool injection_applies(const AnomalyMeta* injection, double time,
                           std::size_t valve) const;

    Scenario scenario_;
    TrialVariation variation_;
};

/// Valves covered by a component name ("SOV-PT12" expands to both tank
/// valves; every other component is the valve of the same name).
std::vector<std::size_t> component_valve_indices(const Scenario& scenario,
                                                 const std::string& component);

/// Compressible orifice mass flux per unit effective area [kg/(s m^2)],
/// choked below the critical pressure ratio. Zero when pressures are equal.
double orifice_mass_flux(double p_up, double p_down, double t_up, const GasProperties& gas);

/// Draws start time, duration, and mode settings for one class.
AnomalyMeta draw_anomaly(const AnomalyClassSpec& spec, const PhaseSchedule& phases, Rng& rng);

/// Extra per-trial telemetry for tests and reports; not part of the Trial.
struct TrialTelemetry {
    std::vector<double> crack_times;
    Eigen::MatrixXd valve_positions;  // n_timesteps x n_valves
};

/// Runs one trial: n_timesteps samples of the scenario sensors, baseline
/// labels over the injected interval, deterministic for a fixed seed.
Trial run_trial(const MonteCarloConfig& config, const std::optional<AnomalyMeta>& injection,
                std::uint64_t seed, std::int64_t trial_id, TrialTelemetry* telemetry = nullptr);

DatasetManifest sim_manifest(const MonteCarloConfig& config);

struct GenerationSummary {
    std::int64_t n_written = 0;
    std::vector<std::pair<std::int64_t, std::string>> faults;  // trial id, message
};

/// Monte Carlo dataset: per-trial seeds are base_seed + trial_id, classes
/// drawn from the mixture. Faulted trials are excluded from the dataset but
/// reported in the summary and in faults.json.
GenerationSummary generate_dataset(const MonteCarloConfig& config,
                                   const std::filesystem::path& out_dir, unsigned jobs,
                                   const std::string& config_hash);

}  // namespace mdetect::sim
