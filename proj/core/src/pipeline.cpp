#include "mdetect/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"
#include "mdetect/parallel.hpp"
#include "mdetect/scenario_json.hpp"
#include "mdetect/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mdetect::pipeline {

PipelineConfig default_config() { return PipelineConfig{}; }

namespace {

json families_to_json(const std::vector<WindowFamily>& families) {
    json arr = json::array();
    for (const auto& fam : families)
        arr.push_back(json{{"length", fam.length}, {"stride", fam.stride},
                           {"subsample", fam.subsample}});
    return arr;
}

std::vector<WindowFamily> families_from_json(const json& arr) {
    std::vector<WindowFamily> families;
    for (const auto& fj : arr) {
        WindowFamily fam;
        fam.length = fj.at("length").get<std::int64_t>();
        fam.stride = fj.value("stride", std::int64_t{1});
        fam.subsample = fj.value("subsample", std::int64_t{1});
        families.push_back(fam);
    }
    return families;
}

json groups_to_json(const ConfusionGroups& groups) {
    return json{{"applicability",
                 groups.applicability == ConfusionGroups::Applicability::always
                     ? "always"
                     : "post_failure_only"},
                {"sets", groups.groups}};
}

ConfusionGroups groups_from_json(const json& j) {
    ConfusionGroups groups;
    groups.applicability = j.value("applicability", std::string("post_failure_only")) == "always"
                               ? ConfusionGroups::Applicability::always
                               : ConfusionGroups::Applicability::post_failure_only;
    groups.groups = j.at("sets").get<std::vector<std::vector<int>>>();
    return groups;
}

}  // namespace

std::string config_to_json(const PipelineConfig& config, int indent) {
    json j;
    j["seed"] = config.seed;
    j["labels"] = to_string(config.labels);
    j["gp"] = json{{"n_nominal", config.gp.n_nominal},
                   {"n_anomalous", config.gp.n_anomalous},
                   {"grid_points", config.gp.grid_points},
                   {"window_a", config.gp.window_a},
                   {"window_b", config.gp.window_b},
                   {"amplitude", config.gp.amplitude},
                   {"frequency", config.gp.frequency},
                   {"jitter", config.gp.jitter}};
    j["sim"] = json::parse(sim::monte_carlo_to_json_string(config.sim, -1));
    j["detector"] = json{{"theta", config.detector.theta},
                         {"p_star", config.detector.p_star},
                         {"families", families_to_json(config.detector.families)},
                         {"cutoff_pooling", to_string(config.detector.pooling)},
                         {"plots", config.detector.plots}};
    j["relabel"] = json{{"gap_close", config.relabel.gap_close}, {"min_run", config.relabel.min_run}};
    if (config.groups) j["groups"] = groups_to_json(*config.groups);
    j["classifier"] = json{{"window_len", config.classifier.window_len},
                           {"predict_tail", config.classifier.predict_tail},
                           {"learning_rate", config.classifier.learning_rate},
                           {"epochs", config.classifier.epochs},
                           {"batch_size", config.classifier.batch_size},
                           {"seed", config.classifier.seed},
                           {"class_weighting", config.classifier.class_weighting},
                           {"model_kind", config.classifier.model_kind}};
    j["include_nominal_in_macro"] = config.include_nominal_in_macro;
    j["leak_study"] = json{{"component", config.leak.component},
                           {"start_times", config.leak.start_times},
                           {"log10_lo", config.leak.log10_lo},
                           {"log10_hi", config.leak.log10_hi},
                           {"grid_points", config.leak.grid_points},
                           {"duration", config.leak.duration},
                           {"seeds_per_point", config.leak.seeds_per_point},
                           {"detect_fraction", config.leak.detect_fraction},
                           {"bisect_iters", config.leak.bisect_iters},
                           {"min_flag_run", config.leak.min_flag_run}};
    j["window_study"] = json{{"durations", config.window_study.durations},
                             {"window_sizes", config.window_study.window_sizes},
                             {"seeds", config.window_study.seeds},
                             {"n_fit", config.window_study.n_fit},
                             {"grid_points", config.window_study.grid_points}};
    return j.dump(indent);
}

void apply_config_json(PipelineConfig& config, const std::string& json_text) {
    const json j = json::parse(json_text);
    config.seed = j.value("seed", config.seed);
    config.jobs = j.value("jobs", config.jobs);
    if (j.contains("labels"))
        config.labels = provenance_from_string(j.at("labels").get<std::string>());
    if (j.contains("gp")) {
        const auto& g = j["gp"];
        config.gp.n_nominal = g.value("n_nominal", config.gp.n_nominal);
        config.gp.n_anomalous = g.value("n_anomalous", config.gp.n_anomalous);
        config.gp.grid_points = g.value("grid_points", config.gp.grid_points);
        config.gp.window_a = g.value("window_a", config.gp.window_a);
        config.gp.window_b = g.value("window_b", config.gp.window_b);
        config.gp.amplitude = g.value("amplitude", config.gp.amplitude);
        config.gp.frequency = g.value("frequency", config.gp.frequency);
        config.gp.jitter = g.value("jitter", config.gp.jitter);
    }
    if (j.contains("sim"))
        config.sim = sim::monte_carlo_from_json_string(j["sim"].dump());
    if (j.contains("detector")) {
        const auto& d = j["detector"];
        config.detector.theta = d.value("theta", config.detector.theta);
        config.detector.p_star = d.value("p_star", config.detector.p_star);
        if (d.contains("families")) config.detector.families = families_from_json(d["families"]);
        if (d.contains("cutoff_pooling"))
            config.detector.pooling =
                cutoff_pooling_from_string(d.at("cutoff_pooling").get<std::string>());
        config.detector.plots = d.value("plots", config.detector.plots);
    }
    if (j.contains("relabel")) {
        config.relabel.gap_close = j["relabel"].value("gap_close", config.relabel.gap_close);
        config.relabel.min_run = j["relabel"].value("min_run", config.relabel.min_run);
    }
    if (j.contains("groups")) config.groups = groups_from_json(j["groups"]);
    if (j.contains("classifier")) {
        const auto& c = j["classifier"];
        config.classifier.window_len = c.value("window_len", config.classifier.window_len);
        config.classifier.predict_tail = c.value("predict_tail", config.classifier.predict_tail);
        config.classifier.learning_rate = c.value("learning_rate", config.classifier.learning_rate);
        config.classifier.epochs = c.value("epochs", config.classifier.epochs);
        config.classifier.batch_size = c.value("batch_size", config.classifier.batch_size);
        config.classifier.seed = c.value("seed", config.classifier.seed);
        config.classifier.class_weighting =
            c.value("class_weighting", config.classifier.class_weighting);
        config.classifier.model_kind = c.value("model_kind", config.classifier.model_kind);
    }
    config.include_nominal_in_macro =
        j.value("include_nominal_in_macro", config.include_nominal_in_macro);
    if (j.contains("leak_study")) {
        const auto& l = j["leak_study"];
        config.leak.component = l.value("component", config.leak.component);
        if (l.contains("start_times"))
            config.leak.start_times = l["start_times"].get<std::vector<double>>();
        config.leak.log10_lo = l.value("log10_lo", config.leak.log10_lo);
        config.leak.log10_hi = l.value("log10_hi", config.leak.log10_hi);
        config.leak.grid_points = l.value("grid_points", config.leak.grid_points);
        config.leak.duration = l.value("duration", config.leak.duration);
        config.leak.seeds_per_point = l.value("seeds_per_point", config.leak.seeds_per_point);
        config.leak.detect_fraction = l.value("detect_fraction", config.leak.detect_fraction);
        config.leak.bisect_iters = l.value("bisect_iters", config.leak.bisect_iters);
        config.leak.min_flag_run = l.value("min_flag_run", config.leak.min_flag_run);
    }
    if (j.contains("window_study")) {
        const auto& w = j["window_study"];
        if (w.contains("durations"))
            config.window_study.durations = w["durations"].get<std::vector<double>>();
        if (w.contains("window_sizes"))
            config.window_study.window_sizes = w["window_sizes"].get<std::vector<std::int64_t>>();
        config.window_study.seeds = w.value("seeds", config.window_study.seeds);
        config.window_study.n_fit = w.value("n_fit", config.window_study.n_fit);
        config.window_study.grid_points = w.value("grid_points", config.window_study.grid_points);
    }
}

PipelineConfig load_config_file(const fs::path& path) {
    if (!fs::exists(path)) throw Error("missing config file: " + path.string());
    PipelineConfig config = default_config();
    apply_config_json(config, read_text_file(path));
    return config;
}

std::string config_hash(const PipelineConfig& config) {
    return fnv1a_hex(config_to_json(config, -1) + "#" + std::to_string(config.seed));
}

ConfusionGroups default_groups_for(const sim::MonteCarloConfig& config) {
    ConfusionGroups groups;
    std::map<std::string, std::map<AnomalyMode, int>> by_component;
    for (const auto& c : config.classes) by_component[c.component][c.mode] = c.class_id;
    for (const auto& [component, modes] : by_component) {
        std::vector<int> set;
        for (AnomalyMode m :
             {AnomalyMode::fail_open, AnomalyMode::internal_leak, AnomalyMode::slow_opening})
            if (auto it = modes.find(m); it != modes.end()) set.push_back(it->second);
        if (set.size() >= 2) groups.groups.push_back(std::move(set));
    }
    return groups;
}

fs::path required_path(const PipelineConfig& config, const std::string& key) {
    auto it = config.paths.find(key);
    if (it == config.paths.end() || it->second.empty())
        throw Error("stage requires a '" + key + "' path");
    return fs::path(it->second);
}

std::vector<LabelSet> load_labels(const Dataset& dataset, const fs::path& dataset_dir,
                                  LabelProvenance provenance) {
    std::vector<LabelSet> labels;
    labels.reserve(dataset.trials.size());
    for (const auto& trial : dataset.trials) {
        if (provenance == LabelProvenance::baseline)
            labels.push_back(trial.labels);
        else
            labels.push_back(read_label_set(dataset_dir, trial.trial_id, provenance,
                                            dataset.manifest.n_timesteps));
    }
    return labels;
}

void stage_gen_gp(const PipelineConfig& config) {
    const auto out = required_path(config, "data");
    const auto& g = config.gp;
    const auto grid = gp::uniform_grid(static_cast<std::size_t>(g.grid_points));

    gp::KernelSpec nominal;
    nominal.jitter = g.jitter;
    gp::KernelSpec anomalous = nominal;
    anomalous.kind = gp::KernelKind::anomalous;
    anomalous.window_a = g.window_a;
    anomalous.window_b = g.window_b;
    anomalous.anomaly_amplitude = g.amplitude;
    anomalous.anomaly_frequency = g.frequency;

    const gp::GpSampler nominal_sampler(nominal, grid);
    std::optional<gp::GpSampler> anomalous_sampler;
    if (g.n_anomalous > 0) anomalous_sampler.emplace(anomalous, grid);

    const auto n_total = g.n_nominal + g.n_anomalous;
    std::vector<Trial> trials(static_cast<std::size_t>(n_total));
    parallel_for(static_cast<std::size_t>(n_total), config.jobs, [&](std::size_t i) {
        const auto trial_id = static_cast<std::int64_t>(i);
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(i);
        trials[i] = trial_id < g.n_nominal
                        ? gp::make_gp_trial(nominal_sampler, seed, trial_id)
                        : gp::make_gp_trial(*anomalous_sampler, seed, trial_id);
    });

    DatasetManifest manifest = gp::gp_manifest(static_cast<std::size_t>(g.grid_points), config.seed);
    manifest.config_hash = config_hash(config);
    write_dataset(manifest, trials, out);
}

void stage_gen_sim(const PipelineConfig& config) {
    const auto out = required_path(config, "data");
    sim::MonteCarloConfig mc = config.sim;
    mc.base_seed = config.seed;
    const auto summary = sim::generate_dataset(mc, out, config.jobs, config_hash(config));
    if (!summary.faults.empty()) {
        std::string msg = "gen-sim finished with per-trial faults:";
        for (const auto& [id, err] : summary.faults)
            msg += "\n  trial " + std::to_string(id) + ": " + err;
        throw Error(msg);
    }
}

void stage_fit_nominal(const PipelineConfig& config) {
    const auto data = required_path(config, "data");
    const auto out = required_path(config, "model");
    const Dataset dataset = read_dataset(data);
    const auto nominal = dataset.nominal_trials();
    NominalModel model = NominalModel::fit(nominal, dataset.manifest, config.detector.families,
                                           config.detector.theta, config.detector.p_star,
                                           config.jobs, config.detector.pooling);
    model.save(out, config_hash(config), config.seed);

    std::string report = "family_length,position,cutoff,gaussian_reference\n";
    for (const auto& row : model.cutoff_report()) {
        report += std::to_string(row.family_length);
        report += ',';
        report += std::to_string(row.position);
        report += ',';
        report += format_double(row.cutoff);
        report += ',';
        report += format_double(row.gaussian_reference);
        report += '\n';
    }
    write_text_file(out / "cutoff_report.csv", report);
}

void stage_detect(const PipelineConfig& config) {
    const auto data = required_path(config, "data");
    const auto model_dir = required_path(config, "model");
    const auto out = required_path(config, "traces");
    if (!fs::exists(model_dir / "header.json"))
        throw Error("detect: missing model at " + model_dir.string());

    const NominalModel model = NominalModel::load(model_dir, config.jobs);
    const Dataset dataset = read_dataset(data);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error("cannot create traces directory " + out.string());

    parallel_for(dataset.trials.size(), config.jobs, [&](std::size_t i) {
        const auto& trial = dataset.trials[i];
        const DetectionTrace trace = detect_trial(model, trial);
        write_trace_csv(out / ("trace_" + std::to_string(trial.trial_id) + ".csv"), trace,
                        dataset.manifest.dt);
        if (config.detector.plots) {
            SvgPlot plot("overall detection fraction, trial " + std::to_string(trial.trial_id),
                         "time", "F_ovr");
            std::vector<double> ts(trace.overall.size());
            for (std::size_t t = 0; t < ts.size(); ++t)
                ts[t] = static_cast<double>(t) * dataset.manifest.dt;
            if (trial.anomaly)
                plot.add_band(trial.anomaly->start_time, trial.anomaly->end_time, "#f5c46a");
            plot.add_line(ts, trace.overall, "F_ovr", "#1f6fb2");
            plot.add_hline(1.0, "#b2341f");
            plot.write(out / ("trace_" + std::to_string(trial.trial_id) + ".svg"));
        }
    });

    json meta;
    meta["format_version"] = 1;
    meta["config_hash"] = config_hash(config);
    meta["seed"] = config.seed;
    meta["n_trials"] = dataset.manifest.n_trials;
    meta["families"] = families_to_json(model.families());
    write_text_file(out / "traces_meta.json", meta.dump(2) + "\n");
}

void stage_relabel(const PipelineConfig& config) {
    const auto data = required_path(config, "data");
    const auto traces_dir = required_path(config, "traces");
    const Dataset dataset = read_dataset(data);

    std::vector<DetectionTrace> traces;
    traces.reserve(dataset.trials.size());
    for (const auto& trial : dataset.trials) {
        const auto path = traces_dir / ("trace_" + std::to_string(trial.trial_id) + ".csv");
        if (!fs::exists(path)) throw Error("relabel: missing trace " + path.string());
        traces.push_back(read_trace_csv(path));
    }

    for (std::size_t i = 0; i < dataset.trials.size(); ++i) {
        const auto& trial = dataset.trials[i];
        LabelSet relabeled = relabel_trial(trial, traces[i], config.relabel);
        write_label_set(data, trial.trial_id, relabeled, dataset.manifest.dt);
        LabelSet corrected = relabeled;
        corrected.provenance = LabelProvenance::corrected;
        write_label_set(data, trial.trial_id, corrected, dataset.manifest.dt);
    }

    const CoverageReport coverage = coverage_report(dataset, traces);
    write_coverage_report(data / "coverage_report.json", coverage, config_hash(config),
                          config.seed);
}

void stage_train(const PipelineConfig& config) {
    const auto data = required_path(config, "data");
    const auto out = required_path(config, "classifier");
    const Dataset dataset = read_dataset(data);
    const auto labels = load_labels(dataset, data, config.labels);
    const WindowClassifier model = WindowClassifier::train(dataset, labels, config.classifier);
    model.save(out, config_hash(config));
    write_loss_history(out / "loss_history.csv", model.loss_history());
}

void stage_eval(const PipelineConfig& config) {
    const auto data = required_path(config, "data");
    const auto classifier_dir = required_path(config, "classifier");
    const auto out = required_path(config, "out");
    if (!fs::exists(classifier_dir / "model.json"))
        throw Error("eval: missing classifier at " + classifier_dir.string());

    const Dataset dataset = read_dataset(data);
    const auto labels = load_labels(dataset, data, config.labels);
    const WindowClassifier model = WindowClassifier::load(classifier_dir);

    const bool use_groups = config.labels == LabelProvenance::corrected;
    ConfusionGroups groups;
    if (use_groups) {
        groups = config.groups ? *config.groups : default_groups_for(config.sim);
        groups.validate(static_cast<int>(dataset.manifest.class_names.size()));
    }

    ConfusionAccumulator acc(static_cast<int>(dataset.manifest.class_names.size()),
                             config.include_nominal_in_macro);
    std::int64_t n_test = 0;
    for (std::size_t i = 0; i < dataset.trials.size(); ++i) {
        const auto& trial = dataset.trials[i];
        if (split_of(trial.trial_id) != Split::test) continue;
        ++n_test;
        const auto pred = model.predict_argmax(trial);
        std::int64_t failure_end = -1;
        if (trial.anomaly)
            failure_end = static_cast<std::int64_t>(
                std::floor(trial.anomaly->end_time / dataset.manifest.dt));
        acc.add(pred, labels[i], use_groups ? &groups : nullptr, failure_end);
    }
    if (n_test == 0) throw Error("eval: empty test split");

    const EvalReport report = acc.finalize(config.labels);
    std::error_code ec;
    fs::create_directories(out, ec);
    const std::string tag = to_string(config.labels);
    write_eval_report(out / ("eval_" + tag + ".json"), report, dataset.manifest.class_names,
                      config_hash(config), config.seed);
    write_confusion_csv(out / ("confusion_" + tag + ".csv"), report,
                        dataset.manifest.class_names);
    std::vector<std::vector<double>> cells;
    for (const auto& row : report.confusion)
        cells.emplace_back(row.begin(), row.end());
    write_text_file(out / ("confusion_" + tag + ".svg"),
                    svg_heatmap(cells, "confusion (" + tag + " labels)"));
}

void stage_report(const PipelineConfig& config) {
    const auto out = required_path(config, "out");
    json summary;
    summary["format_version"] = 1;
    summary["config_hash"] = config_hash(config);
    summary["seed"] = config.seed;

    json reports = json::object();
    std::vector<std::pair<std::string, double>> f1s;
    for (const char* tag : {"baseline", "relabeled", "corrected"}) {
        const auto path = out / (std::string("eval_") + tag + ".json");
        if (!fs::exists(path)) continue;
        const json r = json::parse(read_text_file(path));
        reports[tag] = json{{"precision", r.at("precision")},
                            {"recall", r.at("recall")},
                            {"macro_f1", r.at("macro_f1")}};
        f1s.emplace_back(tag, r.at("macro_f1").get<double>());
    }
    summary["reports"] = reports;
    json deltas = json::object();
    for (std::size_t i = 1; i < f1s.size(); ++i)
        deltas[f1s[i].first + "_minus_" + f1s[i - 1].first] = f1s[i].second - f1s[i - 1].second;
    summary["macro_f1_deltas"] = deltas;
    write_text_file(out / "summary.json", summary.dump(2) + "\n");

    std::string csv = "labels,precision,recall,macro_f1\n";
    for (const auto& [tag, r] : reports.items()) {
        csv += tag;
        csv += ',';
        csv += format_double(r.at("precision").get<double>());
        csv += ',';
        csv += format_double(r.at("recall").get<double>());
        csv += ',';
        csv += format_double(r.at("macro_f1").get<double>());
        csv += '\n';
    }
    write_text_file(out / "summary.csv", csv);
}

std::vector<LeakStudyRow> leak_study(const PipelineConfig& config, const NominalModel& model) {
    const auto& lk = config.leak;
    if (lk.grid_points < 2) throw Error("leak_study: need at least 2 grid points");
    sim::MonteCarloConfig mc = config.sim;
    component_valve_indices(mc.scenario, lk.component);  // validates the component

    auto detect_fraction_at = [&](double log10_frac, double start_time,
                                  bool zero_leak) -> double {
        int hits = 0;
        std::vector<int> results(static_cast<std::size_t>(lk.seeds_per_point), 0);
        parallel_for(static_cast<std::size_t>(lk.seeds_per_point), config.jobs,
                     [&](std::size_t k) {
                         std::optional<AnomalyMeta> injection;
                         AnomalyMeta meta;
                         meta.class_id = 1;
                         meta.component = lk.component;
                         meta.mode = AnomalyMode::internal_leak;
                         meta.start_time = start_time;
                         meta.end_time =
                             std::min(start_time + lk.duration, mc.scenario.phases.sim_end);
                         meta.settings["leak_fraction"] =
                             zero_leak ? 0.0 : std::pow(10.0, log10_frac);
                         injection = meta;
                         const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
                         const Trial trial = sim::run_trial(mc, injection, seed, 0);
                         const DetectionTrace trace = detect_trial(model, trial);
                         const auto smoothed = smooth_flags(trace.flags, config.relabel);
                         std::int64_t run = 0;
                         for (std::size_t t = 0; t < smoothed.size(); ++t) {
                             const double time = static_cast<double>(t) * mc.dt;
                             if (time >= meta.start_time && time <= meta.end_time && smoothed[t]) {
                                 if (++run >= lk.min_flag_run) {
                                     results[k] = 1;
                                     break;
                                 }
                             } else {
                                 run = 0;
                             }
                         }
                     });
        for (int r : results) hits += r;
        return static_cast<double>(hits) / static_cast<double>(lk.seeds_per_point);
    };

    std::vector<LeakStudyRow> rows;
    for (double start : lk.start_times) {
        LeakStudyRow row;
        row.start_time = start;
        row.zero_leak_detect_fraction = detect_fraction_at(0.0, start, true);

        std::vector<double> grid(static_cast<std::size_t>(lk.grid_points));
        for (int i = 0; i < lk.grid_points; ++i)
            grid[static_cast<std::size_t>(i)] =
                lk.log10_lo + (lk.log10_hi - lk.log10_lo) * static_cast<double>(i) /
                                  static_cast<double>(lk.grid_points - 1);
        std::vector<double> fracs;
        for (double g : grid) {
            const double f = detect_fraction_at(g, start, false);
            row.grid.emplace_back(g, f);
            fracs.push_back(f);
        }

        // Lowest grid point at or above the detectability threshold whose
        // left neighbour is below it brackets the minimum.
        std::ptrdiff_t hi_idx = -1;
        for (std::size_t i = 0; i < fracs.size(); ++i)
            if (fracs[i] >= lk.detect_fraction) {
                hi_idx = static_cast<std::ptrdiff_t>(i);
                break;
            }
        if (hi_idx <= 0) {
            row.bracketed = false;  // no bracket: all above threshold or none
            rows.push_back(row);
            continue;
        }
        double lo = grid[static_cast<std::size_t>(hi_idx - 1)];
        double hi = grid[static_cast<std::size_t>(hi_idx)];
        for (int it = 0; it < lk.bisect_iters; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (detect_fraction_at(mid, start, false) >= lk.detect_fraction)
                hi = mid;
            else
                lo = mid;
        }
        row.bracketed = true;
        row.bracket_lo = lo;
        row.bracket_hi = hi;
        row.min_detectable_log10 = hi;
        rows.push_back(row);
    }
    return rows;
}

void stage_leak_study(const PipelineConfig& config) {
    const auto model_dir = required_path(config, "model");
    const auto out = required_path(config, "out");
    if (!fs::exists(model_dir / "header.json"))
        throw Error("leak-study: missing model at " + model_dir.string());
    const NominalModel model = NominalModel::load(model_dir, config.jobs);
    const auto rows = leak_study(config, model);

    std::error_code ec;
    fs::create_directories(out, ec);
    std::string csv =
        "start_time,bracketed,bracket_lo_log10,bracket_hi_log10,min_detectable_log10,"
        "zero_leak_detect_fraction\n";
    for (const auto& row : rows) {
        csv += format_double(row.start_time);
        csv += row.bracketed ? ",1," : ",0,";
        csv += format_double(row.bracket_lo);
        csv += ',';
        csv += format_double(row.bracket_hi);
        csv += ',';
        csv += format_double(row.min_detectable_log10);
        csv += ',';
        csv += format_double(row.zero_leak_detect_fraction);
        csv += '\n';
    }
    write_text_file(out / "leak_study.csv", csv);

    std::string grid_csv = "start_time,log10_leak_fraction,detect_fraction\n";
    for (const auto& row : rows)
        for (const auto& [g, f] : row.grid) {
            grid_csv += format_double(row.start_time);
            grid_csv += ',';
            grid_csv += format_double(g);
            grid_csv += ',';
            grid_csv += format_double(f);
            grid_csv += '\n';
        }
    write_text_file(out / "leak_study_grid.csv", grid_csv);

    json j;
    j["format_version"] = 1;
    j["config_hash"] = config_hash(config);
    j["seed"] = config.seed;
    j["component"] = config.leak.component;
    json jrows = json::array();
    for (const auto& row : rows)
        jrows.push_back(json{{"start_time", row.start_time},
                             {"bracketed", row.bracketed},
                             {"bracket_lo_log10", row.bracket_lo},
                             {"bracket_hi_log10", row.bracket_hi},
                             {"min_detectable_log10", row.min_detectable_log10},
                             {"zero_leak_detect_fraction", row.zero_leak_detect_fraction}});
    j["rows"] = jrows;
    write_text_file(out / "leak_study.json", j.dump(2) + "\n");

    SvgPlot plot("minimum detectable leak fraction vs start time", "start time [s]",
                 "log10 leak fraction");
    std::vector<double> xs, ys;
    for (const auto& row : rows)
        if (row.bracketed) {
            xs.push_back(row.start_time);
            ys.push_back(row.min_detectable_log10);
        }
    if (!xs.empty()) plot.add_line(xs, ys, "min detectable", "#1f6fb2");
    plot.write(out / "leak_study.svg");
}

std::vector<WindowStudyCell> window_size_study(const WindowStudyConfig& study,
                                               const GpConfig& gp_config, double theta,
                                               double p_star, std::uint64_t seed, unsigned jobs) {
    const auto grid = gp::uniform_grid(static_cast<std::size_t>(study.grid_points));

    gp::KernelSpec nominal;
    nominal.jitter = gp_config.jitter;
    const gp::GpSampler nominal_sampler(nominal, grid);

    std::vector<const Trial*> fit_ptrs;
    std::vector<Trial> fit_trials(static_cast<std::size_t>(study.n_fit));
    parallel_for(fit_trials.size(), jobs, [&](std::size_t i) {
        fit_trials[i] = gp::make_gp_trial(nominal_sampler, seed + static_cast<std::uint64_t>(i),
                                          static_cast<std::int64_t>(i));
    });
    for (const auto& t : fit_trials) fit_ptrs.push_back(&t);

    std::vector<WindowFamily> families;
    for (auto size : study.window_sizes) families.push_back({size, 1, 1});
    DatasetManifest manifest =
        gp::gp_manifest(static_cast<std::size_t>(study.grid_points), seed);
    const NominalModel model = NominalModel::fit(fit_ptrs, manifest, families, theta, p_star, jobs);

    std::vector<WindowStudyCell> cells;
    for (double duration : study.durations) {
        if (duration <= 0.0) {
            for (auto size : study.window_sizes)
                cells.push_back({duration, size, std::numeric_limits<double>::quiet_NaN()});
            continue;
        }
        gp::KernelSpec anomalous = nominal;
        anomalous.kind = gp::KernelKind::anomalous;
        anomalous.window_a = 0.5 - duration / 2.0;
        anomalous.window_b = 0.5 + duration / 2.0;
        anomalous.anomaly_amplitude = gp_config.amplitude;
        anomalous.anomaly_frequency = gp_config.frequency;
        const gp::GpSampler anomalous_sampler(anomalous, grid);

        std::vector<Trial> trials(static_cast<std::size_t>(study.seeds));
        parallel_for(trials.size(), jobs, [&](std::size_t k) {
            trials[k] = gp::make_gp_trial(anomalous_sampler,
                                          seed + 100000 + static_cast<std::uint64_t>(k),
                                          static_cast<std::int64_t>(k));
        });

        // Pool timestep-level TP/FP/FN over the batch, one family at a time.
        for (std::size_t f = 0; f < families.size(); ++f) {
            std::int64_t tp = 0, fp = 0, fn = 0;
            for (const auto& trial : trials) {
                for (std::int64_t t = 0; t < manifest.n_timesteps; ++t) {
                    const bool flagged = fb_fraction(model, f, trial.values, t) > 1.0;
                    const bool truth = trial.labels.classes[static_cast<std::size_t>(t)] != 0;
                    if (flagged && truth)
                        ++tp;
                    else if (flagged && !truth)
                        ++fp;
                    else if (!flagged && truth)
                        ++fn;
                }
            }
            const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                                 static_cast<double>(fn);
            cells.push_back({duration, families[f].length,
                             denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom
                                         : std::numeric_limits<double>::quiet_NaN()});
        }
    }
    return cells;
}

void stage_window_study(const PipelineConfig& config) {
    const auto out = required_path(config, "out");
    const auto cells = window_size_study(config.window_study, config.gp, config.detector.theta,
                                         config.detector.p_star, config.seed, config.jobs);
    std::error_code ec;
    fs::create_directories(out, ec);

    std::string csv = "duration,window_size,f1\n";
    for (const auto& cell : cells) {
        csv += format_double(cell.duration);
        csv += ',';
        csv += std::to_string(cell.window);
        csv += ',';
        csv += std::isfinite(cell.f1) ? format_double(cell.f1) : std::string("n/a");
        csv += '\n';
    }
    write_text_file(out / "window_study.csv", csv);

    json j;
    j["format_version"] = 1;
    j["config_hash"] = config_hash(config);
    j["seed"] = config.seed;
    json jcells = json::array();
    for (const auto& cell : cells)
        jcells.push_back(json{{"duration", cell.duration},
                              {"window_size", cell.window},
                              {"f1", std::isfinite(cell.f1) ? json(cell.f1) : json()}});
    j["cells"] = jcells;
    write_text_file(out / "window_study.json", j.dump(2) + "\n");

    SvgPlot plot("detection F1 vs window size", "window size [timesteps]", "F1");
    const char* colors[] = {"#1f6fb2", "#b2341f", "#2e9e4f", "#8a4fb2", "#b2951f"};
    std::size_t color = 0;
    for (double duration : config.window_study.durations) {
        std::vector<double> xs, ys;
        for (const auto& cell : cells)
            if (cell.duration == duration && std::isfinite(cell.f1)) {
                xs.push_back(static_cast<double>(cell.window));
                ys.push_back(cell.f1);
            }
        if (!xs.empty())
            plot.add_line(xs, ys, "duration " + format_double(duration),
                          colors[color++ % 5]);
    }
    plot.write(out / "window_study.svg");
}

void run_stage(const PipelineConfig& config, const std::string& stage) {
    try {
        if (stage == "gen-gp")
            stage_gen_gp(config);
        else if (stage == "gen-sim")
            stage_gen_sim(config);
        else if (stage == "fit-nominal")
            stage_fit_nominal(config);
        else if (stage == "detect")
            stage_detect(config);
        else if (stage == "relabel")
            stage_relabel(config);
        else if (stage == "train")
            stage_train(config);
        else if (stage == "eval")
            stage_eval(config);
        else if (stage == "report")
            stage_report(config);
        else if (stage == "leak-study")
            stage_leak_study(config);
        else if (stage == "window-study")
            stage_window_study(config);
        else
            throw Error("unknown stage '" + stage + "'");
    } catch (const std::exception& e) {
        // Leave a marker beside whatever partial output exists.
        for (const char* key : {"out", "traces", "model", "classifier", "data"}) {
            auto it = config.paths.find(key);
            if (it == config.paths.end()) continue;
            std::error_code ec;
            if (fs::exists(it->second, ec)) {
                std::error_code ignore;
                fs::path marker = fs::path(it->second) / "FAILED";
                try {
                    write_text_file(marker, "stage " + stage + " failed: " + e.what() + "\n");
                } catch (...) {
                }
                break;
            }
        }
        throw Error("stage " + stage + " failed: " + e.what());
    }
}

void run_pipeline(const PipelineConfig& config) {
    if (config.stages.empty()) throw Error("run_pipeline: no stages selected");
    for (const auto& stage : config.stages) run_stage(config, stage);
}

}  // namespace mdetect::pipeline
