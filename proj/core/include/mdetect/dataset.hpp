#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mdetect {

enum class Generator { gp, sim };
std::string to_string(Generator g);
Generator generator_from_string(const std::string& s);

enum class AnomalyMode {
    fail_open,
    fail_closed,
    slow_opening,
    slow_closing,
    internal_leak,
    high_crack,
    low_reseal,
    band_drift,
    synthetic,  // GP validation anomalies, which have no valve mode
};
std::string to_string(AnomalyMode m);
AnomalyMode anomaly_mode_from_string(const std::string& s);

enum class LabelProvenance { baseline, relabeled, corrected };
std::string to_string(LabelProvenance p);
LabelProvenance provenance_from_string(const std::string& s);

/// Ground-truth description of the fault injected into one trial.
struct AnomalyMeta {
    int class_id = 1;  // >= 1; 0 is reserved for nominal
    std::string component;
    AnomalyMode mode = AnomalyMode::fail_open;
    double start_time = 0.0;  // seconds
    double end_time = 0.0;    // seconds
    std::map<std::string, double> settings;
};

/// Per-timestep class ids plus where they came from.
struct LabelSet {
    std::vector<int> classes;
    LabelProvenance provenance = LabelProvenance::baseline;
};

/// One simulated run: a timesteps x parameters value matrix with labels.
struct Trial {
    std::int64_t trial_id = 0;
    Eigen::MatrixXd values;  // n_timesteps x n_parameters
    LabelSet labels;
    std::optional<AnomalyMeta> anomaly;

    bool is_nominal() const { return !anomaly.has_value(); }
};

struct DatasetManifest {
    std::int64_t n_trials = 0;
    std::int64_t n_timesteps = 2721;
    double dt = 1250.0 / 2720.0;
    std::vector<std::string> parameter_names;
    std::vector<std::string> class_names;  // index 0 is always "nominal"
    Generator generator = Generator::sim;
    std::uint64_t seed = 0;
    int format_version = 1;
    std::string config_hash;

    double total_time() const { return static_cast<double>(n_timesteps - 1) * dt; }
    double time_at(std::int64_t step) const { return static_cast<double>(step) * dt; }

    /// Throws on any violated invariant.
    void validate() const;
    /// Throws if the trial does not fit this manifest.
    void validate_trial(const Trial& trial) const;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Trial> trials;

    std::vector<const Trial*> nominal_trials() const;
    std::vector<const Trial*> anomalous_trials() const;
};

/// Directory layout:
///   manifest.json
///   trials/trial_<id>.csv        header: time,<param names...>,label
///   anomalies.json               per-trial fault metadata, keyed by trial id
///   labels/<provenance>/trial_<id>.csv   sibling label sets (never overwrite baseline)
void write_dataset(const DatasetManifest& manifest, const std::vector<Trial>& trials,
                   const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Reads the manifest alone (cheap existence / shape checks).
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Sibling label files for the relabeled / corrected provenances.
void write_label_set(const std::filesystem::path& dataset_dir, std::int64_t trial_id,
                     const LabelSet& labels, double dt);
LabelSet read_label_set(const std::filesystem::path& dataset_dir, std::int64_t trial_id,
                        LabelProvenance provenance, std::int64_t n_timesteps);
bool has_label_set(const std::filesystem::path& dataset_dir, std::int64_t trial_id,
                   LabelProvenance provenance);

/// Supported on-disk format version.
inline constexpr int kDatasetFormatVersion = 1;

}  // namespace mdetect
