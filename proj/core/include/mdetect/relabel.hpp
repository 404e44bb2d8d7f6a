#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdetect/dataset.hpp"
#include "mdetect/detector.hpp"

namespace mdetect {

/// Morphological cleanup for detector flags: gaps of zeros no longer than
/// gap_close between flagged runs are closed first, then runs shorter than
/// min_run are dropped. Applying the policy twice equals applying it once.
struct RelabelPolicy {
    std::int64_t gap_close = 5;
    std::int64_t min_run = 3;

    void validate() const;
};

std::vector<char> smooth_flags(const std::vector<char>& flags, const RelabelPolicy& policy);

/// Detector-derived labels: smoothed-flagged timesteps take the trial's
/// injected class, everything else nominal. Nominal trials always come back
/// all-nominal (their flags are false positives, never labels).
LabelSet relabel_trial(const Trial& trial, const DetectionTrace& trace,
                       const RelabelPolicy& policy);

/// Class sets whose members score as interchangeable after the failure has
/// ended (same-component fail_open / internal_leak / slow_opening by
/// default, where post-failure residual signatures coincide).
struct ConfusionGroups {
    enum class Applicability { post_failure_only, always };

    std::vector<std::vector<int>> groups;  // disjoint class-id sets
    Applicability applicability = Applicability::post_failure_only;

    void validate(int n_classes) const;
    /// Group index containing class_id, or -1.
    int group_of(int class_id) const;
    bool same_group(int a, int b) const;
};

/// Per-timestep correctness mask. Exact match always counts; for
/// t > failure_end (or everywhere when applicability is `always`) a
/// prediction sharing a group with the truth class also counts.
std::vector<char> apply_confusion_groups(const LabelSet& truth, const std::vector<int>& pred,
                                         const ConfusionGroups& groups,
                                         std::int64_t failure_end);

struct CoverageRow {
    int class_id = 0;
    std::string class_name;
    std::int64_t n_trials = 0;
    std::int64_t n_detected = 0;  // trials with >= 1 flag inside the injected interval
    double detectability = 0.0;
    bool needs_adjustment = false;
};

struct CoverageReport {
    double threshold = 0.9;
    std::vector<CoverageRow> rows;
};

/// Per-class detectability: the fraction of trials whose trace flags at
/// least one timestep inside the injected interval. Classes below the
/// threshold are flagged for generation-settings adjustment.
CoverageReport coverage_report(const Dataset& dataset,
                               const std::vector<DetectionTrace>& traces,
                               double threshold = 0.9);

void write_coverage_report(const std::filesystem::path& path, const CoverageReport& report,
                           const std::string& config_hash = "", std::uint64_t seed = 0);

}  // namespace mdetect
