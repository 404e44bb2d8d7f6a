#include <doctest.h>

#include <filesystem>

#include "mdetect/classifier.hpp"
#include "mdetect/error.hpp"
#include "mdetect/rng.hpp"

using namespace mdetect;
namespace fs = std::filesystem;

namespace {

DatasetManifest toy_manifest(std::int64_t n_timesteps, std::size_t n_params,
                             std::size_t n_classes) {
    DatasetManifest m;
    m.n_timesteps = n_timesteps;
    m.dt = 1.0;
    for (std::size_t p = 0; p < n_params; ++p) m.parameter_names.push_back("c" + std::to_string(p));
    m.class_names = {"nominal"};
    for (std::size_t c = 1; c < n_classes; ++c) m.class_names.push_back("f" + std::to_string(c));
    return m;
}

/// Two-class dataset: anomalous trials get a large constant offset on
/// channel 0 over [150, 300); linearly separable by construction.
Dataset separable_dataset(int n_trials, std::int64_t n_timesteps, double offset) {
    auto manifest = toy_manifest(n_timesteps, 2, 2);
    Dataset ds;
    ds.manifest = manifest;
    Rng rng(42);
    for (int i = 0; i < n_trials; ++i) {
        Trial t;
        t.trial_id = i;
        t.values.resize(n_timesteps, 2);
        for (Eigen::Index r = 0; r < n_timesteps; ++r) {
            t.values(r, 0) = rng.normal();
            t.values(r, 1) = rng.normal();
        }
        t.labels.classes.assign(static_cast<std::size_t>(n_timesteps), 0);
        if (i % 2 == 1) {
            AnomalyMeta meta;
            meta.class_id = 1;
            meta.component = "x";
            meta.mode = AnomalyMode::fail_open;
            meta.start_time = 150.0;
            meta.end_time = 299.0;
            t.anomaly = meta;
            for (std::int64_t k = 150; k < 300; ++k) {
                t.values(k, 0) += offset;
                t.labels.classes[static_cast<std::size_t>(k)] = 1;
            }
        }
        ds.trials.push_back(std::move(t));
    }
    ds.manifest.n_trials = n_trials;
    return ds;
}

std::vector<LabelSet> baseline_labels(const Dataset& ds) {
    std::vector<LabelSet> out;
    for (const auto& t : ds.trials) out.push_back(t.labels);
    return out;
}

}  // namespace

TEST_CASE("hash split is deterministic and roughly 80/10/10") {
    int train = 0, val = 0, test = 0;
    for (std::int64_t id = 0; id < 10000; ++id) {
        const auto s = split_of(id);
        CHECK(split_of(id) == s);
        if (s == Split::train) ++train;
        else if (s == Split::validation) ++val;
        else ++test;
    }
    CHECK(train > 7600);
    CHECK(train < 8400);
    CHECK(val > 700);
    CHECK(test > 700);
}

TEST_CASE("window layout covers every timestep exactly once") {
    ClassifierConfig cfg;
    cfg.window_len = 100;
    cfg.predict_tail = 50;
    for (std::int64_t n : {100, 149, 150, 1000, 2721}) {
        const auto layout = WindowClassifier::window_layout(n, cfg);
        std::vector<int> covered(static_cast<std::size_t>(n), 0);
        for (std::size_t k = 0; k < layout.starts.size(); ++k) {
            CHECK(layout.span_begin[k] >= layout.starts[k]);
            CHECK(layout.span_end[k] <= layout.starts[k] + cfg.window_len);
            for (std::int64_t t = layout.span_begin[k]; t < layout.span_end[k]; ++t)
                ++covered[static_cast<std::size_t>(t)];
        }
        for (int c : covered) CHECK(c == 1);
        // Head rule: the first window predicts its full span.
        CHECK(layout.span_begin[0] == 0);
        CHECK(layout.span_end[0] == cfg.window_len);
    }
    CHECK_THROWS_AS(WindowClassifier::window_layout(99, cfg), Error);
}

TEST_CASE("probability rows are non-negative and sum to one") {
    auto ds = separable_dataset(30, 300, 4.0);
    ClassifierConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.05;
    const auto model = WindowClassifier::train(ds, baseline_labels(ds), cfg);
    const auto probs = model.predict_probs(ds.trials[0]);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        CHECK(probs.row(r).minCoeff() >= 0.0);
        CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("untrained (zero-epoch) model predicts the uniform distribution") {
    auto ds = separable_dataset(30, 300, 4.0);
    ClassifierConfig cfg;
    cfg.epochs = 0;
    const auto model = WindowClassifier::train(ds, baseline_labels(ds), cfg);
    const auto probs = model.predict_probs(ds.trials[0]);
    for (Eigen::Index r = 0; r < probs.rows(); ++r)
        for (Eigen::Index c = 0; c < probs.cols(); ++c)
            CHECK(probs(r, c) == doctest::Approx(0.5));
}

TEST_CASE("zero learning rate leaves the loss unchanged") {
    auto ds = separable_dataset(30, 300, 4.0);
    ClassifierConfig cfg;
    cfg.epochs = 5;
    cfg.learning_rate = 0.0;
    const auto model = WindowClassifier::train(ds, baseline_labels(ds), cfg);
    const auto& hist = model.loss_history();
    REQUIRE(hist.size() == 6);
    for (const auto& row : hist) CHECK(row.train_loss == hist.front().train_loss);
}

TEST_CASE("training is deterministic per seed") {
    auto ds = separable_dataset(30, 300, 4.0);
    ClassifierConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 0.05;
    cfg.seed = 9;
    const auto a = WindowClassifier::train(ds, baseline_labels(ds), cfg);
    const auto b = WindowClassifier::train(ds, baseline_labels(ds), cfg);
    CHECK(a.weights() == b.weights());
    cfg.seed = 10;
    const auto c = WindowClassifier::train(ds, baseline_labels(ds), cfg);
    CHECK(a.weights() != c.weights());
}

TEST_CASE("a separable dataset trains past 0.95 held-out timestep accuracy") {
    auto ds = separable_dataset(60, 300, 6.0);
    ClassifierConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 16;
    const auto model = WindowClassifier::train(ds, baseline_labels(ds), cfg);

    std::int64_t correct = 0, total = 0;
    for (const auto& t : ds.trials) {
        if (split_of(t.trial_id) != Split::test) continue;
        const auto pred = model.predict_argmax(t);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            correct += pred[k] == t.labels.classes[k];
            ++total;
        }
    }
    REQUIRE(total > 0);
    CHECK(static_cast<double>(correct) / static_cast<double>(total) > 0.95);
    // Loss decreased.
    CHECK(model.loss_history().back().train_loss < model.loss_history().front().train_loss);
}

TEST_CASE("model save/load round-trips predictions exactly") {
    auto ds = separable_dataset(30, 300, 4.0);
    ClassifierConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 0.05;
    const auto model = WindowClassifier::train(ds, baseline_labels(ds), cfg);
    const auto dir = fs::temp_directory_path() / "mdetect_classifier_rt";
    fs::remove_all(dir);
    model.save(dir, "hash");
    const auto loaded = WindowClassifier::load(dir);
    CHECK(loaded.weights() == model.weights());
    CHECK(loaded.predict_probs(ds.trials[1]) == model.predict_probs(ds.trials[1]));
    fs::remove_all(dir);
}

TEST_CASE("config validation") {
    ClassifierConfig bad;
    bad.predict_tail = 200;
    CHECK_THROWS_AS(bad.validate(), Error);
    ClassifierConfig neg;
    neg.learning_rate = -1.0;
    CHECK_THROWS_AS(neg.validate(), Error);
    ClassifierConfig kind;
    kind.model_kind = "external";
    CHECK_THROWS_WITH_AS(kind.validate(), doctest::Contains("label files"), Error);
    kind.model_kind = "nonsense";
    CHECK_THROWS_AS(kind.validate(), Error);
}

TEST_CASE("training rejects mismatched label vectors and empty splits") {
    auto ds = separable_dataset(10, 300, 4.0);
    ClassifierConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(WindowClassifier::train(ds, {}, cfg), Error);

    // A dataset whose every trial hashes into the test split cannot train.
    Dataset test_only;
    test_only.manifest = ds.manifest;
    for (const auto& t : ds.trials)
        if (split_of(t.trial_id) == Split::test) test_only.trials.push_back(t);
    if (!test_only.trials.empty()) {
        std::vector<LabelSet> labels;
        for (const auto& t : test_only.trials) labels.push_back(t.labels);
        CHECK_THROWS_WITH_AS(WindowClassifier::train(test_only, labels, cfg),
                             doctest::Contains("empty train split"), Error);
    }
}
