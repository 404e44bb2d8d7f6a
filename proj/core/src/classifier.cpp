#include "mdetect/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"
#include "mdetect/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mdetect {

void ClassifierConfig::validate() const {
    if (window_len < 2) throw Error("ClassifierConfig: window_len must be >= 2");
    if (predict_tail < 1 || predict_tail > window_len)
        throw Error("ClassifierConfig: predict_tail must be in [1, window_len]");
    if (!(learning_rate >= 0.0)) throw Error("ClassifierConfig: learning_rate must be >= 0");
    if (epochs < 0) throw Error("ClassifierConfig: epochs must be >= 0");
    if (batch_size < 1) throw Error("ClassifierConfig: batch_size must be >= 1");
    if (model_kind == "external")
        throw Error("ClassifierConfig: external models consume the dataset and label files "
                    "directly; in-process training requires window_logistic");
    if (model_kind != "window_logistic")
        throw Error("ClassifierConfig: unknown model_kind '" + model_kind + "'");
}

Split split_of(std::int64_t trial_id) {
    const auto bucket = splitmix64(static_cast<std::uint64_t>(trial_id)) % 10;
    if (bucket < 8) return Split::train;
    return bucket == 8 ? Split::validation : Split::test;
}

WindowClassifier::WindowLayout WindowClassifier::window_layout(std::int64_t n_timesteps,
                                                               const ClassifierConfig& config) {
    if (n_timesteps < config.window_len)
        throw Error("window_layout: sequence shorter than window_len");
    WindowLayout layout;
    for (std::int64_t s = 0; s + config.window_len <= n_timesteps; s += config.predict_tail)
        layout.starts.push_back(s);
    if (layout.starts.back() + config.window_len < n_timesteps)
        layout.starts.push_back(n_timesteps - config.window_len);
    layout.span_begin.resize(layout.starts.size());
    layout.span_end.resize(layout.starts.size());
    for (std::size_t k = 0; k < layout.starts.size(); ++k) {
        layout.span_begin[k] = k == 0 ? 0 : layout.span_end[k - 1];
        layout.span_end[k] =
            k + 1 == layout.starts.size() ? n_timesteps : layout.starts[k] + config.window_len;
    }
    return layout;
}

namespace {

Eigen::VectorXd window_features(const Eigen::MatrixXd& values, std::int64_t start,
                                const ClassifierConfig& config,
                                const std::vector<ChannelStats>& stats) {
    const auto n_params = values.cols();
    const std::int64_t end = start + config.window_len - 1;
    Eigen::VectorXd f(4 * n_params + 1);
    for (Eigen::Index p = 0; p < n_params; ++p) {
        const double mean = stats[static_cast<std::size_t>(p)].mean;
        const double sd = std::max(stats[static_cast<std::size_t>(p)].std, 1e-12);
        const auto column = values.col(p).segment(start, config.window_len);
        const double wmean = column.mean();
        // OLS slope scaled to the total z-change across the window.
        const double mid = static_cast<double>(config.window_len - 1) / 2.0;
        double sxy = 0.0, sxx = 0.0;
        for (std::int64_t k = 0; k < config.window_len; ++k) {
            const double dx = static_cast<double>(k) - mid;
            sxy += dx * (column(k) - wmean);
            sxx += dx * dx;
        }
        const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
        f[4 * p + 0] = (values(end, p) - mean) / sd;
        f[4 * p + 1] = (wmean - mean) / sd;
        f[4 * p + 2] = slope * static_cast<double>(config.window_len - 1) / sd;
        f[4 * p + 3] = (values(end, p) - values(end - 1, p)) / sd;
    }
    f[4 * n_params] = 1.0;  // bias
    return f;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - m).exp();
    return p / p.sum();
}

}  // namespace

Eigen::VectorXd WindowClassifier::features(const Trial& trial, std::int64_t start) const {
    return window_features(trial.values, start, config_, channel_stats_);
}

WindowClassifier WindowClassifier::train(const Dataset& dataset,
                                         const std::vector<LabelSet>& labels,
                                         const ClassifierConfig& config) {
    config.validate();
    if (labels.size() != dataset.trials.size())
        throw Error("WindowClassifier::train: one label set per trial required");
    const auto n_classes = static_cast<int>(dataset.manifest.class_names.size());

    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < dataset.trials.size(); ++i)
        if (split_of(dataset.trials[i].trial_id) == Split::train) train_idx.push_back(i);
    std::vector<std::size_t> val_idx;
    for (std::size_t i = 0; i < dataset.trials.size(); ++i)
        if (split_of(dataset.trials[i].trial_id) == Split::validation) val_idx.push_back(i);
    if (train_idx.empty()) throw Error("WindowClassifier::train: empty train split");

    WindowClassifier model;
    model.config_ = config;
    model.n_classes_ = n_classes;

    // Channel z-scoring from the training split's nominal ensemble.
    std::vector<const Trial*> norm_source;
    for (auto i : train_idx)
        if (dataset.trials[i].is_nominal()) norm_source.push_back(&dataset.trials[i]);
    if (norm_source.empty())
        for (auto i : train_idx) norm_source.push_back(&dataset.trials[i]);
    const auto n_params = dataset.trials[0].values.cols();
    model.channel_stats_.resize(static_cast<std::size_t>(n_params));
    for (Eigen::Index p = 0; p < n_params; ++p) {
        double sum = 0.0, count = 0.0;
        for (const Trial* t : norm_source) {
            sum += t->values.col(p).sum();
            count += static_cast<double>(t->values.rows());
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (const Trial* t : norm_source) ss += (t->values.col(p).array() - mean).square().sum();
        model.channel_stats_[static_cast<std::size_t>(p)] = {
            mean, std::sqrt(ss / std::max(1.0, count - 1.0))};
    }

    // Per-window feature rows and per-class timestep counts over each
    // window's predicted span.
    const auto layout = window_layout(dataset.manifest.n_timesteps, config);
    const auto n_features = 4 * n_params + 1;
    const auto windows_per_trial = layout.starts.size();
    const auto n_windows = train_idx.size() * windows_per_trial;
    Eigen::MatrixXd features(n_windows, n_features);
    std::vector<std::vector<std::pair<int, std::int64_t>>> window_counts(n_windows);
    std::vector<double> class_timesteps(static_cast<std::size_t>(n_classes), 0.0);

    std::size_t w = 0;
    for (auto i : train_idx) {
        const auto& trial = dataset.trials[i];
        const auto& lab = labels[i].classes;
        if (static_cast<std::int64_t>(lab.size()) != dataset.manifest.n_timesteps)
            throw Error("WindowClassifier::train: label length mismatch for trial " +
                        std::to_string(trial.trial_id));
        for (std::size_t k = 0; k < windows_per_trial; ++k, ++w) {
            features.row(static_cast<Eigen::Index>(w)) =
                window_features(trial.values, layout.starts[k], config, model.channel_stats_);
            std::map<int, std::int64_t> counts;
            for (std::int64_t t = layout.span_begin[k]; t < layout.span_end[k]; ++t) {
                const int c = lab[static_cast<std::size_t>(t)];
                if (c < 0 || c >= n_classes)
                    throw Error("WindowClassifier::train: label out of range");
                ++counts[c];
                class_timesteps[static_cast<std::size_t>(c)] += 1.0;
            }
            window_counts[w].assign(counts.begin(), counts.end());
        }
    }

    // Inverse-frequency class weights; without them the all-nominal
    // predictor dominates the loss at this scale.
    std::vector<double> class_weight(static_cast<std::size_t>(n_classes), 0.0);
    if (config.class_weighting) {
        const double total = std::accumulate(class_timesteps.begin(), class_timesteps.end(), 0.0);
        double present = 0.0;
        for (double c : class_timesteps)
            if (c > 0.0) present += 1.0;
        for (std::size_t c = 0; c < class_weight.size(); ++c)
            if (class_timesteps[c] > 0.0) class_weight[c] = total / (class_timesteps[c] * present);
    } else {
        std::fill(class_weight.begin(), class_weight.end(), 1.0);
    }

    model.weights_ = Eigen::MatrixXd::Zero(n_classes, n_features);

    auto dataset_loss = [&](const std::vector<std::size_t>& idx,
                            const Eigen::MatrixXd& weights) -> double {
        double loss = 0.0, weight_sum = 0.0;
        for (auto i : idx) {
            const auto& trial = dataset.trials[i];
            const auto& lab = labels[i].classes;
            for (std::size_t k = 0; k < windows_per_trial; ++k) {
                const Eigen::VectorXd f =
                    window_features(trial.values, layout.starts[k], config, model.channel_stats_);
                const Eigen::VectorXd p = softmax(weights * f);
                for (std::int64_t t = layout.span_begin[k]; t < layout.span_end[k]; ++t) {
                    const int c = lab[static_cast<std::size_t>(t)];
                    const double wc = class_weight[static_cast<std::size_t>(c)];
                    loss -= wc * std::log(std::max(p[c], 1e-300));
                    weight_sum += wc;
                }
            }
        }
        return weight_sum > 0.0 ? loss / weight_sum : 0.0;
    };

    auto train_loss = [&](const Eigen::MatrixXd& weights) -> double {
        double loss = 0.0, weight_sum = 0.0;
        for (std::size_t wi = 0; wi < n_windows; ++wi) {
            const Eigen::VectorXd p =
                softmax(weights * features.row(static_cast<Eigen::Index>(wi)).transpose());
            for (const auto& [c, cnt] : window_counts[wi]) {
                const double wc = class_weight[static_cast<std::size_t>(c)] *
                                  static_cast<double>(cnt);
                loss -= wc * std::log(std::max(p[c], 1e-300));
                weight_sum += wc;
            }
        }
        return weight_sum > 0.0 ? loss / weight_sum : 0.0;
    };

    Rng rng(config.seed);
    std::vector<std::size_t> order(n_windows);
    std::iota(order.begin(), order.end(), 0);

    model.loss_history_.push_back({0, train_loss(model.weights_),
                                   val_idx.empty() ? 0.0 : dataset_loss(val_idx, model.weights_)});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        // Seeded Fisher-Yates shuffle.
        for (std::size_t i = n_windows; i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t b = 0; b < n_windows; b += static_cast<std::size_t>(config.batch_size)) {
            const auto batch_end = std::min(n_windows, b + static_cast<std::size_t>(config.batch_size));
            Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n_classes, n_features);
            double batch_weight = 0.0;
            for (std::size_t bi = b; bi < batch_end; ++bi) {
                const auto wi = order[bi];
                const Eigen::VectorXd f = features.row(static_cast<Eigen::Index>(wi)).transpose();
                const Eigen::VectorXd p = softmax(model.weights_ * f);
                double sw = 0.0;
                for (const auto& [c, cnt] : window_counts[wi])
                    sw += class_weight[static_cast<std::size_t>(c)] * static_cast<double>(cnt);
                Eigen::VectorXd coeff = p * sw;
                for (const auto& [c, cnt] : window_counts[wi])
                    coeff[c] -= class_weight[static_cast<std::size_t>(c)] *
                                static_cast<double>(cnt);
                grad.noalias() += coeff * f.transpose();
                batch_weight += sw;
            }
            if (batch_weight > 0.0)
                model.weights_.noalias() -= (config.learning_rate / batch_weight) * grad;
            if (!model.weights_.allFinite())
                throw Error("WindowClassifier::train: weights diverged in batch " +
                            std::to_string(b / static_cast<std::size_t>(config.batch_size)) +
                            " of epoch " + std::to_string(epoch));
        }
        const double tl = train_loss(model.weights_);
        if (!std::isfinite(tl))
            throw Error("WindowClassifier::train: loss diverged at epoch " +
                        std::to_string(epoch));
        model.loss_history_.push_back(
            {epoch, tl, val_idx.empty() ? 0.0 : dataset_loss(val_idx, model.weights_)});
    }
    return model;
}

Eigen::MatrixXd WindowClassifier::predict_probs(const Trial& trial) const {
    if (trial.values.cols() != static_cast<Eigen::Index>(channel_stats_.size()))
        throw Error("predict_probs: trial channel count does not match the model");
    const auto layout = window_layout(trial.values.rows(), config_);
    Eigen::MatrixXd probs(trial.values.rows(), n_classes_);
    for (std::size_t k = 0; k < layout.starts.size(); ++k) {
        const Eigen::VectorXd f =
            window_features(trial.values, layout.starts[k], config_, channel_stats_);
        const Eigen::VectorXd p = softmax(weights_ * f);
        for (std::int64_t t = layout.span_begin[k]; t < layout.span_end[k]; ++t)
            probs.row(t) = p.transpose();
    }
    return probs;
}

std::vector<int> WindowClassifier::predict_argmax(const Trial& trial) const {
    const Eigen::MatrixXd probs = predict_probs(trial);
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index t = 0; t < probs.rows(); ++t) {
        Eigen::Index best = 0;
        probs.row(t).maxCoeff(&best);
        out[static_cast<std::size_t>(t)] = static_cast<int>(best);
    }
    return out;
}

void WindowClassifier::save(const fs::path& dir, const std::string& config_hash) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create classifier directory " + dir.string());
    json j;
    j["format_version"] = kFormatVersion;
    j["config_hash"] = config_hash;
    j["model_kind"] = config_.model_kind;
    j["window_len"] = config_.window_len;
    j["predict_tail"] = config_.predict_tail;
    j["learning_rate"] = config_.learning_rate;
    j["epochs"] = config_.epochs;
    j["batch_size"] = config_.batch_size;
    j["seed"] = config_.seed;
    j["class_weighting"] = config_.class_weighting;
    j["n_classes"] = n_classes_;
    json stats = json::array();
    for (const auto& cs : channel_stats_) stats.push_back(json{{"mean", cs.mean}, {"std", cs.std}});
    j["channel_stats"] = stats;
    write_text_file(dir / "model.json", j.dump(2) + "\n");

    std::string w;
    for (Eigen::Index r = 0; r < weights_.rows(); ++r) {
        for (Eigen::Index c = 0; c < weights_.cols(); ++c) {
            if (c) w += ',';
            w += format_double(weights_(r, c));
        }
        w += '\n';
    }
    write_text_file(dir / "weights.csv", w);
}

WindowClassifier WindowClassifier::load(const fs::path& dir) {
    const auto header_path = dir / "model.json";
    if (!fs::exists(header_path)) throw Error("missing classifier model: " + header_path.string());
    const json j = json::parse(read_text_file(header_path));
    if (j.at("format_version").get<int>() > kFormatVersion)
        throw Error("classifier format_version newer than supported");
    WindowClassifier model;
    model.config_.model_kind = j.value("model_kind", std::string("window_logistic"));
    model.config_.window_len = j.at("window_len").get<std::int64_t>();
    model.config_.predict_tail = j.at("predict_tail").get<std::int64_t>();
    model.config_.learning_rate = j.at("learning_rate").get<double>();
    model.config_.epochs = j.at("epochs").get<int>();
    model.config_.batch_size = j.at("batch_size").get<int>();
    model.config_.seed = j.at("seed").get<std::uint64_t>();
    model.config_.class_weighting = j.value("class_weighting", true);
    model.n_classes_ = j.at("n_classes").get<int>();
    for (const auto& sj : j.at("channel_stats"))
        model.channel_stats_.push_back({sj.at("mean").get<double>(), sj.at("std").get<double>()});

    const auto text = read_text_file(dir / "weights.csv");
    std::vector<std::vector<double>> rows;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto field : split_csv_line(line)) row.push_back(parse_double(field));
        rows.push_back(std::move(row));
    }
    if (rows.empty() || static_cast<int>(rows.size()) != model.n_classes_)
        throw Error("weights.csv does not match n_classes");
    model.weights_.resize(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) throw Error("ragged weights.csv");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            model.weights_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return model;
}

void write_loss_history(const fs::path& path, const std::vector<LossHistoryRow>& history) {
    std::string out = "epoch,train_loss,validation_loss\n";
    for (const auto& row : history) {
        out += std::to_string(row.epoch);
        out += ',';
        out += format_double(row.train_loss);
        out += ',';
        out += format_double(row.validation_loss);
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace mdetect
