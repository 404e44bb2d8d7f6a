#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdetect/dataset.hpp"
#include "mdetect/nominal.hpp"

namespace mdetect {

struct ClassifierConfig {
    std::int64_t window_len = 100;
    std::int64_t predict_tail = 50;
    double learning_rate = 3e-4;
    int epochs = 200;
    int batch_size = 64;
    std::uint64_t seed = 0;
    bool class_weighting = true;  // inverse-frequency loss weights
    std::string model_kind = "window_logistic";

    void validate() const;
};

enum class Split { train, validation, test };

/// Deterministic 80/10/10 split by trial-id hash. Stable across runs,
/// platforms, and dataset composition.
Split split_of(std::int64_t trial_id);

struct LossHistoryRow {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

/// Multinomial logistic classifier over per-window summary features
/// (z-scored channel value at the window end, window mean, window slope,
/// last first-difference). Windows are staggered by predict_tail so each
/// timestep is predicted by exactly one window; the first window also covers
/// its own head, and a final clamped window covers the sequence tail.
class WindowClassifier {
  public:
    /// labels[i] pairs with dataset.trials[i]. Trains on the hash-split
    /// train partition with seeded mini-batch gradient descent on weighted
    /// categorical cross-entropy. Channel z-scoring uses the training
    /// split's nominal trials.
    static WindowClassifier train(const Dataset& dataset, const std::vector<LabelSet>& labels,
                                  const ClassifierConfig& config);

    /// Per-timestep class probability rows; each row sums to 1.
    Eigen::MatrixXd predict_probs(const Trial& trial) const;
    std::vector<int> predict_argmax(const Trial& trial) const;

    const std::vector<LossHistoryRow>& loss_history() const { return loss_history_; }
    int n_classes() const { return n_classes_; }
    const ClassifierConfig& config() const { return config_; }
    const Eigen::MatrixXd& weights() const { return weights_; }

    void save(const std::filesystem::path& dir, const std::string& config_hash = "") const;
    static WindowClassifier load(const std::filesystem::path& dir);

    /// Feature matrix for one trial (one row per staggered window) plus the
    /// predicted span of each window. Exposed for the prediction path and
    /// for tests.
    struct WindowLayout {
        std::vector<std::int64_t> starts;
        std::vector<std::int64_t> span_begin;  // predicted [begin, end) per window
        std::vector<std::int64_t> span_end;
    };
    static WindowLayout window_layout(std::int64_t n_timesteps, const ClassifierConfig& config);
    Eigen::VectorXd features(const Trial& trial, std::int64_t start) const;

    static constexpr int kFormatVersion = 1;

  private:
    WindowClassifier() = default;

    ClassifierConfig config_;
    int n_classes_ = 0;
    std::vector<ChannelStats> channel_stats_;
    Eigen::MatrixXd weights_;  // n_classes x (n_features + 1), bias last
    std::vector<LossHistoryRow> loss_history_;
};

void write_loss_history(const std::filesystem::path& path,
                        const std::vector<LossHistoryRow>& history);

}  // namespace mdetect
