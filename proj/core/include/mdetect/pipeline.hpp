#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdetect/classifier.hpp"
#include "mdetect/dataset.hpp"
#include "mdetect/detector.hpp"
#include "mdetect/gp.hpp"
#include "mdetect/metrics.hpp"
#include "mdetect/nominal.hpp"
#include "mdetect/relabel.hpp"
#include "mdetect/sim.hpp"

namespace mdetect::pipeline {

struct GpConfig {
    std::int64_t n_nominal = 300;
    std::int64_t n_anomalous = 0;
    std::int64_t grid_points = 1000;
    double window_a = 0.3;
    double window_b = 0.7;
    double amplitude = 0.3;
    double frequency = 10.0 * 3.14159265358979323846;
    double jitter = 1e-10;
};

struct DetectorConfig {
    double theta = 1e-4;
    double p_star = 0.99;
    std::vector<WindowFamily> families = default_window_families();
    CutoffPooling pooling = CutoffPooling::per_position;
    bool plots = false;  // per-trial F_ovr SVG next to each trace
};

struct LeakStudyConfig {
    std::string component = "SOV-HB";
    std::vector<double> start_times = {200.0, 600.0, 950.0};
    double log10_lo = -4.5;
    double log10_hi = -1.0;
    int grid_points = 8;
    double duration = 60.0;  // s of leak
    int seeds_per_point = 10;
    double detect_fraction = 0.9;  // trial detectability threshold
    int bisect_iters = 8;
    // A trial counts as detected when a smoothed flag run of at least this
    // many timesteps lies inside the injected interval; leaks produce
    // sustained runs, stray nominal flags do not.
    std::int64_t min_flag_run = 20;
};

struct WindowStudyConfig {
    std::vector<double> durations = {0.1, 0.2, 0.4};
    std::vector<std::int64_t> window_sizes = {5, 10, 20, 40};
    int seeds = 50;
    std::int64_t n_fit = 200;  // nominal trials behind the study model
    // Sampling density of the study grid. Window-size effects resolve when
    // the sweep brackets the anomaly's internal correlation length, which
    // sits near 5 steps at this density for the default kernel frequency.
    std::int64_t grid_points = 250;
};

/// One configuration drives every stage. Paths name the artifact
/// directories a stage reads and writes ("data", "model", "traces",
/// "classifier", "out"). The config hash stamped into artifacts covers the
/// semantic configuration and seed, not paths or stage selection.
struct PipelineConfig {
    std::uint64_t seed = 42;
    unsigned jobs = 1;
    std::vector<std::string> stages;
    std::map<std::string, std::string> paths;
    LabelProvenance labels = LabelProvenance::baseline;

    GpConfig gp;
    sim::MonteCarloConfig sim = sim::default_monte_carlo();
    DetectorConfig detector;
    RelabelPolicy relabel;
    std::optional<ConfusionGroups> groups;  // defaults to the roster groups
    ClassifierConfig classifier;
    bool include_nominal_in_macro = true;
    LeakStudyConfig leak;
    WindowStudyConfig window_study;
};

PipelineConfig default_config();

/// Defaults overridden by the keys present in the JSON file.
PipelineConfig load_config_file(const std::filesystem::path& path);
void apply_config_json(PipelineConfig& config, const std::string& json_text);

std::string config_to_json(const PipelineConfig& config, int indent = 2);
std::string config_hash(const PipelineConfig& config);

/// Same-component {fail_open, internal_leak, slow_opening} triples from the
/// simulator class roster.
ConfusionGroups default_groups_for(const sim::MonteCarloConfig& config);

std::filesystem::path required_path(const PipelineConfig& config, const std::string& key);

std::vector<LabelSet> load_labels(const Dataset& dataset, const std::filesystem::path& dataset_dir,
                                  LabelProvenance provenance);

/// Stage entry points. Each reads/writes only the directories named in
/// config.paths and stamps artifacts with the config hash and seed.
void stage_gen_gp(const PipelineConfig& config);
void stage_gen_sim(const PipelineConfig& config);
void stage_fit_nominal(const PipelineConfig& config);
void stage_detect(const PipelineConfig& config);
void stage_relabel(const PipelineConfig& config);
void stage_train(const PipelineConfig& config);
void stage_eval(const PipelineConfig& config);
void stage_report(const PipelineConfig& config);
void stage_leak_study(const PipelineConfig& config);
void stage_window_study(const PipelineConfig& config);

/// Runs config.stages in order. A failing stage aborts the run with the
/// stage named in the error; its partial output directory keeps a FAILED
/// marker file.
void run_pipeline(const PipelineConfig& config);
void run_stage(const PipelineConfig& config, const std::string& stage);

struct LeakStudyRow {
    double start_time = 0.0;
    bool bracketed = false;
    double bracket_lo = 0.0;   // log10 leak fraction
    double bracket_hi = 0.0;
    double min_detectable_log10 = 0.0;
    double zero_leak_detect_fraction = 0.0;
    std::vector<std::pair<double, double>> grid;  // (log10 fraction, detect fraction)
};

/// Minimum-detectable-leak search: seeded trial banks per grid point, trial
/// detectability from smoothed flags inside the injected interval, bisection
/// to the smallest fraction at or above the detectability threshold.
std::vector<LeakStudyRow> leak_study(const PipelineConfig& config, const NominalModel& model);

struct WindowStudyCell {
    double duration = 0.0;
    std::int64_t window = 0;
    double f1 = 0.0;  // NaN when undefined (no true anomaly timesteps)
};

/// Timestep-level detection F1 against GP truth windows, per (anomaly
/// duration, window size), pooled over a seeded batch.
std::vector<WindowStudyCell> window_size_study(const WindowStudyConfig& study,
                                               const GpConfig& gp_config, double theta,
                                               double p_star, std::uint64_t seed, unsigned jobs);

}  // namespace mdetect::pipeline
