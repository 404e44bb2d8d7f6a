#include "mdetect/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mdetect {

std::string to_string(Generator g) { return g == Generator::gp ? "gp" : "sim"; }

Generator generator_from_string(const std::string& s) {
    if (s == "gp") return Generator::gp;
    if (s == "sim") return Generator::sim;
    throw Error("unknown generator '" + s + "'");
}

std::string to_string(AnomalyMode m) {
    switch (m) {
        case AnomalyMode::fail_open: return "fail_open";
        case AnomalyMode::fail_closed: return "fail_closed";
        case AnomalyMode::slow_opening: return "slow_opening";
        case AnomalyMode::slow_closing: return "slow_closing";
        case AnomalyMode::internal_leak: return "internal_leak";
        case AnomalyMode::high_crack: return "high_crack";
        case AnomalyMode::low_reseal: return "low_reseal";
        case AnomalyMode::band_drift: return "band_drift";
        case AnomalyMode::synthetic: return "synthetic";
    }
    throw Error("invalid AnomalyMode");
}

AnomalyMode anomaly_mode_from_string(const std::string& s) {
    static const std::map<std::string, AnomalyMode> table = {
        {"fail_open", AnomalyMode::fail_open},       {"fail_closed", AnomalyMode::fail_closed},
        {"slow_opening", AnomalyMode::slow_opening}, {"slow_closing", AnomalyMode::slow_closing},
        {"internal_leak", AnomalyMode::internal_leak}, {"high_crack", AnomalyMode::high_crack},
        {"low_reseal", AnomalyMode::low_reseal},     {"band_drift", AnomalyMode::band_drift},
        {"synthetic", AnomalyMode::synthetic},
    };
    auto it = table.find(s);
    if (it == table.end()) throw Error("unknown anomaly mode '" + s + "'");
    return it->second;
}

std::string to_string(LabelProvenance p) {
    switch (p) {
        case LabelProvenance::baseline: return "baseline";
        case LabelProvenance::relabeled: return "relabeled";
        case LabelProvenance::corrected: return "corrected";
    }
    throw Error("invalid LabelProvenance");
}

LabelProvenance provenance_from_string(const std::string& s) {
    if (s == "baseline") return LabelProvenance::baseline;
    if (s == "relabeled") return LabelProvenance::relabeled;
    if (s == "corrected") return LabelProvenance::corrected;
    throw Error("unknown label provenance '" + s + "'");
}

void DatasetManifest::validate() const {
    if (n_timesteps < 2) throw Error("manifest: n_timesteps must be >= 2");
    if (!(dt > 0.0)) throw Error("manifest: dt must be positive");
    if (n_trials < 0) throw Error("manifest: negative n_trials");
    if (parameter_names.empty()) throw Error("manifest: no parameter names");
    if (class_names.empty() || class_names[0] != "nominal")
        throw Error("manifest: class index 0 must be named 'nominal'");
    std::set<std::string> params(parameter_names.begin(), parameter_names.end());
    if (params.size() != parameter_names.size())
        throw Error("manifest: duplicate parameter names");
    std::set<std::string> classes(class_names.begin(), class_names.end());
    if (classes.size() != class_names.size()) throw Error("manifest: duplicate class names");
}

void DatasetManifest::validate_trial(const Trial& trial) const {
    const auto n_params = static_cast<std::int64_t>(parameter_names.size());
    if (trial.values.rows() != n_timesteps || trial.values.cols() != n_params) {
        std::ostringstream os;
        os << "trial " << trial.trial_id << ": values are " << trial.values.rows() << "x"
           << trial.values.cols() << ", manifest requires " << n_timesteps << "x" << n_params;
        throw Error(os.str());
    }
    if (!trial.values.allFinite())
        throw Error("trial " + std::to_string(trial.trial_id) + ": non-finite values");
    if (static_cast<std::int64_t>(trial.labels.classes.size()) != n_timesteps)
        throw Error("trial " + std::to_string(trial.trial_id) + ": label length mismatch");
    const int n_classes = static_cast<int>(class_names.size());
    for (int c : trial.labels.classes)
        if (c < 0 || c >= n_classes)
            throw Error("trial " + std::to_string(trial.trial_id) + ": label " +
                        std::to_string(c) + " outside class range [0, " +
                        std::to_string(n_classes - 1) + "]");
    if (trial.anomaly) {
        const auto& a = *trial.anomaly;
        if (a.class_id < 1 || a.class_id >= n_classes)
            throw Error("trial " + std::to_string(trial.trial_id) + ": anomaly class_id " +
                        std::to_string(a.class_id) + " out of range");
        if (!(0.0 <= a.start_time && a.start_time <= a.end_time &&
              a.end_time <= total_time() * (1.0 + 1e-12)))
            throw Error("trial " + std::to_string(trial.trial_id) +
                        ": anomaly interval outside [0, total_time]");
    }
}

std::vector<const Trial*> Dataset::nominal_trials() const {
    std::vector<const Trial*> out;
    for (const auto& t : trials)
        if (t.is_nominal()) out.push_back(&t);
    return out;
}

std::vector<const Trial*> Dataset::anomalous_trials() const {
    std::vector<const Trial*> out;
    for (const auto& t : trials)
        if (!t.is_nominal()) out.push_back(&t);
    return out;
}

namespace {

std::string trial_filename(std::int64_t trial_id) {
    return "trial_" + std::to_string(trial_id) + ".csv";
}

std::string trial_csv(const DatasetManifest& manifest, const Trial& trial) {
    std::string out;
    out.reserve(static_cast<std::size_t>(trial.values.size()) * 20);
    out += "time";
    for (const auto& p : manifest.parameter_names) {
        out += ',';
        out += p;
    }
    out += ",label\n";
    for (std::int64_t k = 0; k < manifest.n_timesteps; ++k) {
        out += format_double(manifest.time_at(k));
        for (std::int64_t p = 0; p < trial.values.cols(); ++p) {
            out += ',';
            out += format_double(trial.values(k, p));
        }
        out += ',';
        out += std::to_string(trial.labels.classes[static_cast<std::size_t>(k)]);
        out += '\n';
    }
    return out;
}

/// Parses a trial CSV (values + labels). Times are not retained; the grid
/// is implied by the manifest.
void parse_trial_csv(const std::string& content, const DatasetManifest& manifest, Trial& trial) {
    const auto n_params = static_cast<std::int64_t>(manifest.parameter_names.size());
    trial.values.resize(manifest.n_timesteps, n_params);
    trial.labels.classes.resize(static_cast<std::size_t>(manifest.n_timesteps));
    trial.labels.provenance = LabelProvenance::baseline;

    std::size_t pos = 0;
    std::int64_t row = -1;  // header first
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        const std::string_view line(content.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (row == -1) {
            if (fields.size() != static_cast<std::size_t>(n_params) + 2 || fields[0] != "time" ||
                fields.back() != "label")
                throw Error("trial " + std::to_string(trial.trial_id) + ": bad CSV header");
            for (std::int64_t p = 0; p < n_params; ++p)
                if (fields[static_cast<std::size_t>(p) + 1] != manifest.parameter_names[static_cast<std::size_t>(p)])
                    throw Error("trial " + std::to_string(trial.trial_id) +
                                ": CSV parameter names do not match manifest");
            row = 0;
            continue;
        }
        if (row >= manifest.n_timesteps)
            throw Error("trial " + std::to_string(trial.trial_id) + ": too many rows");
        if (fields.size() != static_cast<std::size_t>(n_params) + 2)
            throw Error("trial " + std::to_string(trial.trial_id) + ": bad field count at row " +
                        std::to_string(row));
        for (std::int64_t p = 0; p < n_params; ++p) {
            const double v = parse_double(fields[static_cast<std::size_t>(p) + 1], true);
            if (!std::isfinite(v))
                throw Error("trial " + std::to_string(trial.trial_id) + ": NaN in values at row " +
                            std::to_string(row));
            trial.values(row, p) = v;
        }
        trial.labels.classes[static_cast<std::size_t>(row)] =
            static_cast<int>(parse_int(fields.back()));
        ++row;
    }
    if (row != manifest.n_timesteps)
        throw Error("trial " + std::to_string(trial.trial_id) + ": expected " +
                    std::to_string(manifest.n_timesteps) + " rows, got " + std::to_string(row));
}

json anomaly_to_json(const AnomalyMeta& a) {
    json j;
    j["class_id"] = a.class_id;
    j["component"] = a.component;
    j["mode"] = to_string(a.mode);
    j["start_time"] = a.start_time;
    j["end_time"] = a.end_time;
    j["settings"] = a.settings;
    return j;
}

AnomalyMeta anomaly_from_json(const json& j) {
    AnomalyMeta a;
    a.class_id = j.at("class_id").get<int>();
    a.component = j.at("component").get<std::string>();
    a.mode = anomaly_mode_from_string(j.at("mode").get<std::string>());
    a.start_time = j.at("start_time").get<double>();
    a.end_time = j.at("end_time").get<double>();
    if (j.contains("settings"))
        a.settings = j.at("settings").get<std::map<std::string, double>>();
    return a;
}

json manifest_to_json(const DatasetManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["n_trials"] = m.n_trials;
    j["n_timesteps"] = m.n_timesteps;
    j["dt"] = m.dt;
    j["parameter_names"] = m.parameter_names;
    j["class_names"] = m.class_names;
    j["generator"] = to_string(m.generator);
    j["seed"] = m.seed;
    j["config_hash"] = m.config_hash;
    return j;
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version > kDatasetFormatVersion)
        throw Error("dataset format_version " + std::to_string(m.format_version) +
                    " is newer than supported version " + std::to_string(kDatasetFormatVersion));
    m.n_trials = j.at("n_trials").get<std::int64_t>();
    m.n_timesteps = j.at("n_timesteps").get<std::int64_t>();
    m.dt = j.at("dt").get<double>();
    m.parameter_names = j.at("parameter_names").get<std::vector<std::string>>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.generator = generator_from_string(j.at("generator").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("config_hash")) m.config_hash = j.at("config_hash").get<std::string>();
    return m;
}

}  // namespace

void write_dataset(const DatasetManifest& manifest, const std::vector<Trial>& trials,
                   const fs::path& dir) {
    DatasetManifest m = manifest;
    m.n_trials = static_cast<std::int64_t>(trials.size());
    m.validate();
    for (const auto& t : trials) m.validate_trial(t);

    std::error_code ec;
    fs::create_directories(dir / "trials", ec);
    if (ec) throw Error("cannot create dataset directory " + dir.string() + ": " + ec.message());

    json anomalies = json::object();
    for (const auto& t : trials) {
        write_text_file(dir / "trials" / trial_filename(t.trial_id), trial_csv(m, t));
        if (t.anomaly) anomalies[std::to_string(t.trial_id)] = anomaly_to_json(*t.anomaly);
    }
    json aindex;
    aindex["format_version"] = m.format_version;
    aindex["anomalies"] = anomalies;
    write_text_file(dir / "anomalies.json", aindex.dump(2) + "\n");

    // Manifest last: its presence marks the dataset complete.
    write_text_file(dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

DatasetManifest read_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    if (!fs::exists(path)) throw Error("missing manifest: " + path.string());
    auto m = manifest_from_json(json::parse(read_text_file(path)));
    m.validate();
    return m;
}

Dataset read_dataset(const fs::path& dir) {
    Dataset ds;
    ds.manifest = read_manifest(dir);

    std::map<std::int64_t, AnomalyMeta> anomalies;
    const auto apath = dir / "anomalies.json";
    if (fs::exists(apath)) {
        const json aindex = json::parse(read_text_file(apath));
        for (const auto& [key, value] : aindex.at("anomalies").items())
            anomalies.emplace(parse_int(key), anomaly_from_json(value));
    }

    std::vector<std::int64_t> ids;
    const auto tdir = dir / "trials";
    if (fs::exists(tdir)) {
        for (const auto& entry : fs::directory_iterator(tdir)) {
            const auto name = entry.path().filename().string();
            if (name.size() > 10 && name.starts_with("trial_") && name.ends_with(".csv"))
                ids.push_back(parse_int(std::string_view(name).substr(6, name.size() - 10)));
        }
    }
    std::sort(ids.begin(), ids.end());
    if (static_cast<std::int64_t>(ids.size()) != ds.manifest.n_trials)
        throw Error("dataset " + dir.string() + ": manifest lists " +
                    std::to_string(ds.manifest.n_trials) + " trials but " +
                    std::to_string(ids.size()) + " trial files exist");

    ds.trials.reserve(ids.size());
    for (auto id : ids) {
        Trial t;
        t.trial_id = id;
        parse_trial_csv(read_text_file(tdir / trial_filename(id)), ds.manifest, t);
        if (auto it = anomalies.find(id); it != anomalies.end()) t.anomaly = it->second;
        ds.manifest.validate_trial(t);
        ds.trials.push_back(std::move(t));
    }
    return ds;
}

void write_label_set(const fs::path& dataset_dir, std::int64_t trial_id, const LabelSet& labels,
                     double dt) {
    if (labels.provenance == LabelProvenance::baseline)
        throw Error("baseline labels live in the trial files and are never rewritten");
    const auto dir = dataset_dir / "labels" / to_string(labels.provenance);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create label directory " + dir.string() + ": " + ec.message());
    std::string out = "time,label\n";
    for (std::size_t k = 0; k < labels.classes.size(); ++k) {
        out += format_double(static_cast<double>(k) * dt);
        out += ',';
        out += std::to_string(labels.classes[k]);
        out += '\n';
    }
    write_text_file(dir / trial_filename(trial_id), out);
}

bool has_label_set(const fs::path& dataset_dir, std::int64_t trial_id,
                   LabelProvenance provenance) {
    return fs::exists(dataset_dir / "labels" / to_string(provenance) / trial_filename(trial_id));
}

LabelSet read_label_set(const fs::path& dataset_dir, std::int64_t trial_id,
                        LabelProvenance provenance, std::int64_t n_timesteps) {
    const auto path = dataset_dir / "labels" / to_string(provenance) / trial_filename(trial_id);
    if (!fs::exists(path))
        throw Error("missing " + to_string(provenance) + " labels for trial " +
                    std::to_string(trial_id) + ": " + path.string());
    const auto content = read_text_file(path);
    LabelSet labels;
    labels.provenance = provenance;
    labels.classes.reserve(static_cast<std::size_t>(n_timesteps));
    std::size_t pos = 0;
    bool header = true;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        const std::string_view line(content.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        if (header) {
            if (line != "time,label") throw Error("bad label header in " + path.string());
            header = false;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) throw Error("bad label row in " + path.string());
        labels.classes.push_back(static_cast<int>(parse_int(fields[1])));
    }
    if (static_cast<std::int64_t>(labels.classes.size()) != n_timesteps)
        throw Error("label file " + path.string() + " row count != n_timesteps");
    return labels;
}

}  // namespace mdetect
