#include <doctest.h>

#include <filesystem>

#include "mdetect/error.hpp"
#include "mdetect/relabel.hpp"
#include "mdetect/rng.hpp"

using namespace mdetect;

namespace {

std::vector<char> flags_of(const std::string& s) {
    std::vector<char> out;
    for (char c : s) out.push_back(c == '1');
    return out;
}

Trial trial_with(std::size_t n, std::optional<AnomalyMeta> meta) {
    Trial t;
    t.trial_id = 0;
    t.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 1);
    t.labels.classes.assign(n, 0);
    t.anomaly = std::move(meta);
    return t;
}

DetectionTrace trace_with(const std::vector<char>& flags) {
    DetectionTrace tr;
    tr.flags = flags;
    tr.overall.assign(flags.size(), 0.0);
    for (std::size_t i = 0; i < flags.size(); ++i) tr.overall[i] = flags[i] ? 2.0 : 0.0;
    return tr;
}

}  // namespace

TEST_CASE("gap closing merges runs: 1,1,0,0,1,1 with gap_close 2") {
    RelabelPolicy policy;
    policy.gap_close = 2;
    policy.min_run = 1;
    CHECK(smooth_flags(flags_of("110011"), policy) == flags_of("111111"));
}

TEST_CASE("smoothing drops short runs after closing gaps") {
    RelabelPolicy policy;
    policy.gap_close = 1;
    policy.min_run = 3;
    CHECK(smooth_flags(flags_of("0110100000110000"), policy) == flags_of("0111100000000000"));
    // Leading and trailing zeros are not gaps.
    CHECK(smooth_flags(flags_of("0001110000"), policy) == flags_of("0001110000"));
    CHECK(smooth_flags(flags_of("1000001"), policy) == flags_of("0000000"));
}

TEST_CASE("smoothing is idempotent (property over random flag strings)") {
    Rng rng(88);
    for (int rep = 0; rep < 300; ++rep) {
        RelabelPolicy policy;
        policy.gap_close = static_cast<std::int64_t>(rng.uniform() * 6);
        policy.min_run = static_cast<std::int64_t>(rng.uniform() * 5);
        std::vector<char> flags(40 + static_cast<std::size_t>(rng.uniform() * 60));
        for (auto& f : flags) f = rng.uniform() < 0.35;
        const auto once = smooth_flags(flags, policy);
        CHECK(smooth_flags(once, policy) == once);
    }
}

TEST_CASE("relabel_trial assigns the injected class to smoothed flags only") {
    AnomalyMeta meta;
    meta.class_id = 7;
    meta.component = "SOV-X";
    meta.mode = AnomalyMode::fail_open;
    meta.start_time = 2.0;
    meta.end_time = 3.0;
    auto trial = trial_with(12, meta);
    RelabelPolicy policy;
    policy.gap_close = 1;
    policy.min_run = 2;
    const auto labels = relabel_trial(trial, trace_with(flags_of("001101100000")), policy);
    CHECK(labels.provenance == LabelProvenance::relabeled);
    CHECK(labels.classes == std::vector<int>{0, 0, 7, 7, 7, 7, 7, 0, 0, 0, 0, 0});
    // Only {nominal, injected class} ever appear.
    for (int c : labels.classes) CHECK((c == 0 || c == 7));
}

TEST_CASE("zero flags produce all-nominal labels") {
    auto trial = trial_with(6, AnomalyMeta{3, "V", AnomalyMode::fail_closed, 1.0, 2.0, {}});
    const auto labels = relabel_trial(trial, trace_with(flags_of("000000")), RelabelPolicy{});
    for (int c : labels.classes) CHECK(c == 0);
}

TEST_CASE("nominal trials always relabel to all-nominal, whatever the flags say") {
    auto trial = trial_with(8, std::nullopt);
    const auto labels = relabel_trial(trial, trace_with(flags_of("11111111")), RelabelPolicy{});
    CHECK(labels.provenance == LabelProvenance::relabeled);
    for (int c : labels.classes) CHECK(c == 0);
}

TEST_CASE("relabel_trial rejects mismatched trace lengths") {
    auto trial = trial_with(8, std::nullopt);
    CHECK_THROWS_AS(relabel_trial(trial, trace_with(flags_of("1111")), RelabelPolicy{}), Error);
}

TEST_CASE("confusion groups: membership, validation, post-failure mask") {
    ConfusionGroups groups;
    groups.groups = {{2, 3, 4}, {7, 8}};
    groups.validate(10);
    CHECK(groups.same_group(2, 4));
    CHECK_FALSE(groups.same_group(2, 7));
    CHECK_FALSE(groups.same_group(0, 0));  // nominal is never grouped

    LabelSet truth;
    truth.classes = {2, 2, 2, 2, 2, 2};
    const std::vector<int> pred = {3, 2, 3, 3, 2, 4};
    const auto mask = apply_confusion_groups(truth, pred, groups, 2);
    // t <= 2 requires exact match; t > 2 accepts same-group predictions.
    CHECK(mask == std::vector<char>{0, 1, 0, 1, 1, 1});

    groups.applicability = ConfusionGroups::Applicability::always;
    const auto mask_always = apply_confusion_groups(truth, pred, groups, 2);
    CHECK(mask_always == std::vector<char>{1, 1, 1, 1, 1, 1});
}

TEST_CASE("empty groups reduce to exact matching; nominal truth unchanged by groups") {
    ConfusionGroups none;
    LabelSet truth;
    truth.classes = {0, 1, 2};
    const std::vector<int> pred = {0, 2, 2};
    CHECK(apply_confusion_groups(truth, pred, none, 0) == std::vector<char>{1, 0, 1});

    ConfusionGroups groups;
    groups.groups = {{1, 2}};
    LabelSet nominal_truth;
    nominal_truth.classes = {0, 0, 0};
    const std::vector<int> p2 = {0, 1, 2};
    CHECK(apply_confusion_groups(nominal_truth, p2, groups, -1) == std::vector<char>{1, 0, 0});
}

TEST_CASE("group mask dominates the exact-match mask pointwise (property)") {
    Rng rng(17);
    ConfusionGroups groups;
    groups.groups = {{1, 2}, {3, 4, 5}};
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 20;
        LabelSet truth;
        std::vector<int> pred;
        for (std::size_t i = 0; i < n; ++i) {
            truth.classes.push_back(static_cast<int>(rng.uniform() * 6));
            pred.push_back(static_cast<int>(rng.uniform() * 6));
        }
        const auto fe = static_cast<std::int64_t>(rng.uniform() * n);
        const auto grouped = apply_confusion_groups(truth, pred, groups, fe);
        ConfusionGroups none;
        const auto exact = apply_confusion_groups(truth, pred, none, fe);
        for (std::size_t i = 0; i < n; ++i) CHECK(grouped[i] >= exact[i]);
    }
}

TEST_CASE("overlapping groups are rejected") {
    ConfusionGroups bad;
    bad.groups = {{1, 2}, {2, 3}};
    CHECK_THROWS_AS(bad.validate(10), Error);
    ConfusionGroups out_of_range;
    out_of_range.groups = {{11}};
    CHECK_THROWS_AS(out_of_range.validate(10), Error);
}

TEST_CASE("coverage report: empty for all-nominal, flags undetected classes") {
    DatasetManifest m;
    m.n_timesteps = 10;
    m.dt = 1.0;
    m.parameter_names = {"x"};
    m.class_names = {"nominal", "a", "b"};

    Dataset ds;
    ds.manifest = m;
    ds.trials.push_back(trial_with(10, std::nullopt));
    std::vector<DetectionTrace> traces = {trace_with(flags_of("0000000000"))};
    CHECK(coverage_report(ds, traces).rows.empty());

    AnomalyMeta hit;
    hit.class_id = 1;
    hit.start_time = 2.0;
    hit.end_time = 5.0;
    AnomalyMeta miss;
    miss.class_id = 2;
    miss.start_time = 2.0;
    miss.end_time = 5.0;
    ds.trials.push_back(trial_with(10, hit));
    ds.trials.push_back(trial_with(10, miss));
    traces.push_back(trace_with(flags_of("0001100000")));  // inside [2, 5]
    traces.push_back(trace_with(flags_of("1000000001")));  // outside only
    const auto report = coverage_report(ds, traces, 0.9);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].class_id == 1);
    CHECK(report.rows[0].detectability == 1.0);
    CHECK_FALSE(report.rows[0].needs_adjustment);
    CHECK(report.rows[1].class_id == 2);
    CHECK(report.rows[1].detectability == 0.0);
    CHECK(report.rows[1].needs_adjustment);

    const auto path = std::filesystem::temp_directory_path() / "mdetect_coverage.json";
    write_coverage_report(path, report);
    CHECK(std::filesystem::exists(path));
    std::filesystem::remove(path);
}
