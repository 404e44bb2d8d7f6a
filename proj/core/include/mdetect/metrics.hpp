#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdetect/dataset.hpp"
#include "mdetect/relabel.hpp"

namespace mdetect {

/// Multiclass scores over pooled timesteps. The confusion matrix is
/// truth-major (rows = truth, columns = predicted). Macro averages run over
/// the supported classes (those appearing in truth or predictions), so
/// evaluating predictions against their own labels scores exactly 1.
struct EvalReport {
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double macro_f1 = 0.0;
    std::vector<std::vector<std::int64_t>> confusion;
    std::vector<double> per_class_f1;        // 0 for unsupported classes
    std::vector<int> evaluated_classes;      // classes in the macro average
    std::int64_t n_timesteps_evaluated = 0;
    LabelProvenance label_provenance = LabelProvenance::baseline;
};

/// Pools sequences into one confusion matrix. When groups are given, a
/// group-correct prediction past failure_end is credited to the truth class
/// (the diagonal) before scoring.
class ConfusionAccumulator {
  public:
    ConfusionAccumulator(int n_classes, bool include_nominal_in_macro = true);

    void add(const std::vector<int>& pred, const LabelSet& truth,
             const ConfusionGroups* groups = nullptr, std::int64_t failure_end = -1);

    EvalReport finalize(LabelProvenance provenance) const;

  private:
    int n_classes_;
    bool include_nominal_;
    std::vector<std::vector<std::int64_t>> confusion_;
};

/// One-shot scoring of a single sequence.
EvalReport evaluate(const std::vector<int>& pred, const LabelSet& truth, int n_classes,
                    const ConfusionGroups* groups = nullptr, std::int64_t failure_end = -1,
                    bool include_nominal_in_macro = true);

void write_eval_report(const std::filesystem::path& json_path, const EvalReport& report,
                       const std::vector<std::string>& class_names,
                       const std::string& config_hash, std::uint64_t seed);
void write_confusion_csv(const std::filesystem::path& path, const EvalReport& report,
                         const std::vector<std::string>& class_names);

}  // namespace mdetect
