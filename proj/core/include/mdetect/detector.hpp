#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mdetect/dataset.hpp"
#include "mdetect/nominal.hpp"

namespace mdetect {

/// Per-timestep detection fractions and anomaly flags for one trial.
struct DetectionTrace {
    std::vector<std::int64_t> family_lengths;
    std::vector<std::vector<double>> family_fb;  // [family][t], min of fwd/bwd fractions
    std::vector<double> overall;                 // max over families
    std::vector<char> flags;                     // overall > 1 (strict)
    // Raw per-window values, kept when requested: [family][position].
    std::vector<std::vector<double>> window_fractions;
    std::vector<std::vector<double>> window_distances;
};

/// Detection fraction F = d / d* for one window. A degenerate cutoff of zero
/// (identical nominal ensemble) maps d = 0 to 0 and anything else to +inf.
double detection_fraction(double d, double cutoff);

/// Raw window fraction: max-over-parameters M-distance over the cutoff.
double window_fraction(const NominalModel& model, std::size_t family, std::size_t pos_index,
                       const Eigen::MatrixXd& trial_values);

/// Forward-backward fused fraction at timestep t for one family (the min of
/// the backward window [t-T, t) and forward window (t, t+T] fractions).
/// Point families (length 1) evaluate the window covering t itself. At
/// sequence edges where one side has no full window, the existing side is
/// used. For strided families the backward window is the evaluated window
/// ending latest at or before t-1 and the forward window the one starting
/// earliest at or after t+1.
double fb_fraction(const NominalModel& model, std::size_t family,
                   const Eigen::MatrixXd& trial_values, std::int64_t t);

/// Max of fb_fraction over every fitted family.
double overall_fraction(const NominalModel& model, const Eigen::MatrixXd& trial_values,
                        std::int64_t t);

/// Full per-timestep trace. Window fractions are computed once per position
/// and shared across the fused outputs, so this matches the one-off
/// fb_fraction / overall_fraction values exactly.
DetectionTrace detect_trial(const NominalModel& model, const Trial& trial,
                            bool keep_window_fractions = false);

/// Trace CSV: t, F_fb_<T> per family, F_ovr, flag.
void write_trace_csv(const std::filesystem::path& path, const DetectionTrace& trace, double dt);
DetectionTrace read_trace_csv(const std::filesystem::path& path);

/// True when at least one flagged timestep falls inside [start_s, end_s].
bool flagged_inside(const DetectionTrace& trace, double dt, double start_s, double end_s);

}  // namespace mdetect
