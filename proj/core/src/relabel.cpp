#include "mdetect/relabel.hpp"

#include <set>

#include <json.hpp>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"

using nlohmann::json;

namespace mdetect {

void RelabelPolicy::validate() const {
    if (gap_close < 0 || min_run < 0) throw Error("RelabelPolicy: values must be >= 0");
}

std::vector<char> smooth_flags(const std::vector<char>& flags, const RelabelPolicy& policy) {
    policy.validate();
    const auto n = static_cast<std::int64_t>(flags.size());
    std::vector<char> out(flags.begin(), flags.end());

    // Close interior zero gaps of length <= gap_close.
    std::int64_t i = 0;
    while (i < n) {
        if (out[static_cast<std::size_t>(i)]) {
            ++i;
            continue;
        }
        std::int64_t j = i;
        while (j < n && !out[static_cast<std::size_t>(j)]) ++j;
        const bool interior = i > 0 && j < n;
        if (interior && j - i <= policy.gap_close)
            for (std::int64_t k = i; k < j; ++k) out[static_cast<std::size_t>(k)] = 1;
        i = j;
    }

    // Drop surviving runs shorter than min_run.
    i = 0;
    while (i < n) {
        if (!out[static_cast<std::size_t>(i)]) {
            ++i;
            continue;
        }
        std::int64_t j = i;
        while (j < n && out[static_cast<std::size_t>(j)]) ++j;
        if (j - i < policy.min_run)
            for (std::int64_t k = i; k < j; ++k) out[static_cast<std::size_t>(k)] = 0;
        i = j;
    }
    return out;
}

LabelSet relabel_trial(const Trial& trial, const DetectionTrace& trace,
                       const RelabelPolicy& policy) {
    if (trace.flags.size() != trial.labels.classes.size())
        throw Error("relabel_trial: trace length does not match trial " +
                    std::to_string(trial.trial_id));
    LabelSet labels;
    labels.provenance = LabelProvenance::relabeled;
    labels.classes.assign(trial.labels.classes.size(), 0);
    if (!trial.anomaly) return labels;  // nominal trials stay all-nominal

    const auto smoothed = smooth_flags(trace.flags, policy);
    const int class_id = trial.anomaly->class_id;
    for (std::size_t t = 0; t < smoothed.size(); ++t)
        if (smoothed[t]) labels.classes[t] = class_id;
    return labels;
}

void ConfusionGroups::validate(int n_classes) const {
    std::set<int> seen;
    for (const auto& group : groups)
        for (int id : group) {
            if (id < 0 || id >= n_classes)
                throw Error("ConfusionGroups: class id " + std::to_string(id) + " out of range");
            if (!seen.insert(id).second)
                throw Error("ConfusionGroups: class id " + std::to_string(id) +
                            " appears in more than one group");
        }
}

int ConfusionGroups::group_of(int class_id) const {
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (int id : groups[g])
            if (id == class_id) return static_cast<int>(g);
    return -1;
}

bool ConfusionGroups::same_group(int a, int b) const {
    const int ga = group_of(a);
    return ga >= 0 && ga == group_of(b);
}

std::vector<char> apply_confusion_groups(const LabelSet& truth, const std::vector<int>& pred,
                                         const ConfusionGroups& groups,
                                         std::int64_t failure_end) {
    if (truth.classes.size() != pred.size())
        throw Error("apply_confusion_groups: length mismatch");
    std::vector<char> mask(pred.size(), 0);
    for (std::size_t t = 0; t < pred.size(); ++t) {
        if (pred[t] == truth.classes[t]) {
            mask[t] = 1;
            continue;
        }
        const bool grouping_active =
            groups.applicability == ConfusionGroups::Applicability::always ||
            static_cast<std::int64_t>(t) > failure_end;
        if (grouping_active && groups.same_group(pred[t], truth.classes[t])) mask[t] = 1;
    }
    return mask;
}

CoverageReport coverage_report(const Dataset& dataset, const std::vector<DetectionTrace>& traces,
                               double threshold) {
    if (traces.size() != dataset.trials.size())
        throw Error("coverage_report: one trace per trial required");
    std::map<int, CoverageRow> rows;
    for (std::size_t i = 0; i < dataset.trials.size(); ++i) {
        const auto& trial = dataset.trials[i];
        if (!trial.anomaly) continue;
        auto& row = rows[trial.anomaly->class_id];
        if (row.n_trials == 0) {
            row.class_id = trial.anomaly->class_id;
            row.class_name = dataset.manifest.class_names[static_cast<std::size_t>(row.class_id)];
        }
        ++row.n_trials;
        if (flagged_inside(traces[i], dataset.manifest.dt, trial.anomaly->start_time,
                           trial.anomaly->end_time))
            ++row.n_detected;
    }
    CoverageReport report;
    report.threshold = threshold;
    for (auto& [id, row] : rows) {
        row.detectability =
            row.n_trials > 0 ? static_cast<double>(row.n_detected) / static_cast<double>(row.n_trials)
                             : 0.0;
        row.needs_adjustment = row.detectability < threshold;
        report.rows.push_back(row);
    }
    return report;
}

void write_coverage_report(const std::filesystem::path& path, const CoverageReport& report,
                           const std::string& config_hash, std::uint64_t seed) {
    json rows = json::array();
    for (const auto& row : report.rows)
        rows.push_back(json{{"class_id", row.class_id},
                            {"class_name", row.class_name},
                            {"n_trials", row.n_trials},
                            {"n_detected", row.n_detected},
                            {"detectability", row.detectability},
                            {"needs_adjustment", row.needs_adjustment}});
    json j;
    j["format_version"] = 1;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["threshold"] = report.threshold;
    j["classes"] = rows;
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace mdetect
