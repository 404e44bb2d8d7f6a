#include "mdetect/metrics.hpp"

#include <json.hpp>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"

using nlohmann::json;

namespace mdetect {

ConfusionAccumulator::ConfusionAccumulator(int n_classes, bool include_nominal_in_macro)
    : n_classes_(n_classes), include_nominal_(include_nominal_in_macro) {
    if (n_classes < 1) throw Error("ConfusionAccumulator: need at least one class");
    confusion_.assign(static_cast<std::size_t>(n_classes),
                      std::vector<std::int64_t>(static_cast<std::size_t>(n_classes), 0));
}

void ConfusionAccumulator::add(const std::vector<int>& pred, const LabelSet& truth,
                               const ConfusionGroups* groups, std::int64_t failure_end) {
    if (pred.size() != truth.classes.size())
        throw Error("ConfusionAccumulator::add: length mismatch");
    std::vector<char> mask;
    if (groups) mask = apply_confusion_groups(truth, pred, *groups, failure_end);
    for (std::size_t t = 0; t < pred.size(); ++t) {
        const int truth_c = truth.classes[t];
        int pred_c = pred[t];
        if (truth_c < 0 || truth_c >= n_classes_ || pred_c < 0 || pred_c >= n_classes_)
            throw Error("ConfusionAccumulator::add: class id out of range");
        if (groups && mask[t]) pred_c = truth_c;  // group-correct counts for the truth class
        ++confusion_[static_cast<std::size_t>(truth_c)][static_cast<std::size_t>(pred_c)];
    }
}

EvalReport ConfusionAccumulator::finalize(LabelProvenance provenance) const {
    EvalReport report;
    report.label_provenance = provenance;
    report.confusion = confusion_;
    report.per_class_f1.assign(static_cast<std::size_t>(n_classes_), 0.0);

    std::vector<std::int64_t> row_sum(static_cast<std::size_t>(n_classes_), 0);
    std::vector<std::int64_t> col_sum(static_cast<std::size_t>(n_classes_), 0);
    for (int r = 0; r < n_classes_; ++r)
        for (int c = 0; c < n_classes_; ++c) {
            const auto v = confusion_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            row_sum[static_cast<std::size_t>(r)] += v;
            col_sum[static_cast<std::size_t>(c)] += v;
            report.n_timesteps_evaluated += v;
        }

    double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
    for (int c = 0; c < n_classes_; ++c) {
        const auto sc = static_cast<std::size_t>(c);
        const bool supported = row_sum[sc] > 0 || col_sum[sc] > 0;
        if (!supported) continue;
        const double tp = static_cast<double>(confusion_[sc][sc]);
        const double precision = col_sum[sc] > 0 ? tp / static_cast<double>(col_sum[sc]) : 0.0;
        const double recall = row_sum[sc] > 0 ? tp / static_cast<double>(row_sum[sc]) : 0.0;
        const double f1 =
            precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        report.per_class_f1[sc] = f1;
        if (c == 0 && !include_nominal_) continue;
        report.evaluated_classes.push_back(c);
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
    }
    const auto n_eval = static_cast<double>(report.evaluated_classes.size());
    if (n_eval > 0) {
        report.precision = precision_sum / n_eval;
        report.recall = recall_sum / n_eval;
        report.macro_f1 = f1_sum / n_eval;
    }
    return report;
}

EvalReport evaluate(const std::vector<int>& pred, const LabelSet& truth, int n_classes,
                    const ConfusionGroups* groups, std::int64_t failure_end,
                    bool include_nominal_in_macro) {
    ConfusionAccumulator acc(n_classes, include_nominal_in_macro);
    acc.add(pred, truth, groups, failure_end);
    return acc.finalize(truth.provenance);
}

void write_eval_report(const std::filesystem::path& json_path, const EvalReport& report,
                       const std::vector<std::string>& class_names,
                       const std::string& config_hash, std::uint64_t seed) {
    json j;
    j["format_version"] = 1;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["label_provenance"] = to_string(report.label_provenance);
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["macro_f1"] = report.macro_f1;
    j["per_class_f1"] = report.per_class_f1;
    j["evaluated_classes"] = report.evaluated_classes;
    j["n_timesteps_evaluated"] = report.n_timesteps_evaluated;
    j["class_names"] = class_names;
    write_text_file(json_path, j.dump(2) + "\n");
}

void write_confusion_csv(const std::filesystem::path& path, const EvalReport& report,
                         const std::vector<std::string>& class_names) {
    std::string out = "truth\\pred";
    for (const auto& name : class_names) {
        out += ',';
        out += name;
    }
    out += '\n';
    for (std::size_t r = 0; r < report.confusion.size(); ++r) {
        out += class_names[r];
        for (std::size_t c = 0; c < report.confusion[r].size(); ++c) {
            out += ',';
            out += std::to_string(report.confusion[r][c]);
        }
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace mdetect
