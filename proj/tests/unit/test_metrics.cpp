#include <doctest.h>

#include <filesystem>

#include "mdetect/error.hpp"
#include "mdetect/metrics.hpp"
#include "mdetect/rng.hpp"

using namespace mdetect;

namespace {
LabelSet labels_of(std::vector<int> classes, LabelProvenance prov = LabelProvenance::baseline) {
    LabelSet l;
    l.classes = std::move(classes);
    l.provenance = prov;
    return l;
}
}  // namespace

TEST_CASE("perfect predictions score 1 with a diagonal confusion matrix") {
    const auto truth = labels_of({0, 1, 2, 1, 0, 2});
    const auto report = evaluate({0, 1, 2, 1, 0, 2}, truth, 3);
    CHECK(report.precision == 1.0);
    CHECK(report.recall == 1.0);
    CHECK(report.macro_f1 == 1.0);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (r != c) CHECK(report.confusion[r][c] == 0);
    CHECK(report.confusion[0][0] == 2);
    CHECK(report.confusion[1][1] == 2);
    CHECK(report.confusion[2][2] == 2);
}

TEST_CASE("two-class fixture: per-class F1 {2/3, 4/5}, macro 11/15") {
    const auto truth = labels_of({0, 0, 1, 1});
    const auto report = evaluate({0, 1, 1, 1}, truth, 2);
    CHECK(report.per_class_f1[0] == doctest::Approx(2.0 / 3.0));
    CHECK(report.per_class_f1[1] == doctest::Approx(4.0 / 5.0));
    CHECK(report.macro_f1 == doctest::Approx(11.0 / 15.0));
    CHECK(report.confusion[0][0] == 1);
    CHECK(report.confusion[0][1] == 1);
    CHECK(report.confusion[1][1] == 2);
}

TEST_CASE("row sums equal truth counts and the total equals evaluated timesteps") {
    Rng rng(5);
    ConfusionAccumulator acc(4);
    std::vector<std::int64_t> truth_counts(4, 0);
    std::int64_t total = 0;
    for (int seq = 0; seq < 5; ++seq) {
        std::vector<int> truth, pred;
        for (int i = 0; i < 30; ++i) {
            truth.push_back(static_cast<int>(rng.uniform() * 4));
            pred.push_back(static_cast<int>(rng.uniform() * 4));
            ++truth_counts[static_cast<std::size_t>(truth.back())];
            ++total;
        }
        acc.add(pred, labels_of(truth), nullptr, -1);
    }
    const auto report = acc.finalize(LabelProvenance::baseline);
    CHECK(report.n_timesteps_evaluated == total);
    for (int c = 0; c < 4; ++c) {
        std::int64_t row = 0;
        for (int k = 0; k < 4; ++k) row += report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
        CHECK(row == truth_counts[static_cast<std::size_t>(c)]);
    }
}

TEST_CASE("evaluating predictions against their own labels scores exactly 1") {
    Rng rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<int> pred;
        for (int i = 0; i < 50; ++i) pred.push_back(static_cast<int>(rng.uniform() * 5));
        const auto report = evaluate(pred, labels_of(pred), 25);
        CHECK(report.macro_f1 == 1.0);
        CHECK(report.precision == 1.0);
        CHECK(report.recall == 1.0);
    }
}

TEST_CASE("group scoring never lowers macro F1 (mask dominance property)") {
    Rng rng(7);
    ConfusionGroups groups;
    groups.groups = {{1, 2, 3}};
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<int> truth, pred;
        for (int i = 0; i < 80; ++i) {
            truth.push_back(static_cast<int>(rng.uniform() * 4));
            pred.push_back(static_cast<int>(rng.uniform() * 4));
        }
        const auto fe = static_cast<std::int64_t>(rng.uniform() * 40);
        const auto plain = evaluate(pred, labels_of(truth), 4);
        const auto grouped = evaluate(pred, labels_of(truth), 4, &groups, fe);
        CHECK(grouped.macro_f1 >= plain.macro_f1 - 1e-12);
        CHECK(grouped.precision >= plain.precision - 1e-12);
        CHECK(grouped.recall >= plain.recall - 1e-12);
    }
}

TEST_CASE("group-correct predictions are counted for the truth class") {
    ConfusionGroups groups;
    groups.groups = {{1, 2}};
    const auto truth = labels_of({1, 1, 1, 1});
    const auto report = evaluate({2, 2, 2, 2}, truth, 3, &groups, /*failure_end=*/1);
    // t in {2, 3} are group-correct and move onto the diagonal.
    CHECK(report.confusion[1][2] == 2);
    CHECK(report.confusion[1][1] == 2);
}

TEST_CASE("unsupported classes are excluded from the macro average") {
    const auto truth = labels_of({0, 0, 1, 1});
    const auto report = evaluate({0, 0, 1, 1}, truth, 25);
    CHECK(report.evaluated_classes == std::vector<int>{0, 1});
    CHECK(report.macro_f1 == 1.0);
}

TEST_CASE("nominal can be excluded from the macro average by switch") {
    const auto truth = labels_of({0, 0, 0, 1, 1, 2});
    const std::vector<int> pred = {0, 0, 0, 1, 0, 2};
    const auto with_nominal = evaluate(pred, truth, 3, nullptr, -1, true);
    const auto without = evaluate(pred, truth, 3, nullptr, -1, false);
    CHECK(with_nominal.evaluated_classes.size() == 3);
    CHECK(without.evaluated_classes.size() == 2);
    CHECK(without.evaluated_classes.front() != 0);
}

TEST_CASE("length mismatches and bad ids are rejected") {
    CHECK_THROWS_AS(evaluate({0, 1}, labels_of({0}), 2), Error);
    CHECK_THROWS_AS(evaluate({5}, labels_of({0}), 2), Error);
}

TEST_CASE("report files are written") {
    const auto truth = labels_of({0, 0, 1, 1});
    const auto report = evaluate({0, 1, 1, 1}, truth, 2);
    const auto dir = std::filesystem::temp_directory_path();
    write_eval_report(dir / "mdetect_eval.json", report, {"nominal", "a"}, "hash", 1);
    write_confusion_csv(dir / "mdetect_conf.csv", report, {"nominal", "a"});
    CHECK(std::filesystem::exists(dir / "mdetect_eval.json"));
    CHECK(std::filesystem::exists(dir / "mdetect_conf.csv"));
    std::filesystem::remove(dir / "mdetect_eval.json");
    std::filesystem::remove(dir / "mdetect_conf.csv");
}
