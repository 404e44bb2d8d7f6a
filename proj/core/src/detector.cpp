#include "mdetect/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"

namespace mdetect {

double detection_fraction(double d, double cutoff) {
    if (d < 0.0 || !std::isfinite(d)) throw Error("detection_fraction: invalid distance");
    if (cutoff > 0.0) return d / cutoff;
    return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double window_fraction(const NominalModel& model, std::size_t family, std::size_t pos_index,
                       const Eigen::MatrixXd& trial_values) {
    const double d = model.max_param_mdist(family, pos_index, trial_values);
    return detection_fraction(d, model.cutoff(family, pos_index));
}

namespace {

/// Index of the evaluated window whose span lies entirely in [0, t):
/// the one with the latest start p satisfying p + length <= t. Returns -1
/// if none exists.
std::ptrdiff_t backward_index(const std::vector<std::int64_t>& starts, std::int64_t length,
                              std::int64_t t) {
    const std::int64_t want = t - length;  // latest admissible start
    if (starts.empty() || starts.front() > want) return -1;
    auto it = std::upper_bound(starts.begin(), starts.end(), want);
    return (it - starts.begin()) - 1;
}

/// Index of the evaluated window starting earliest at or after t+1, -1 if
/// none exists.
std::ptrdiff_t forward_index(const std::vector<std::int64_t>& starts, std::int64_t t) {
    auto it = std::lower_bound(starts.begin(), starts.end(), t + 1);
    if (it == starts.end()) return -1;
    return it - starts.begin();
}

/// Index of the window covering t whose start is nearest below it (point
/// families).
std::ptrdiff_t covering_index(const std::vector<std::int64_t>& starts, std::int64_t length,
                              std::int64_t t) {
    auto it = std::upper_bound(starts.begin(), starts.end(), t);
    if (it == starts.begin()) return -1;
    const auto idx = (it - starts.begin()) - 1;
    return starts[static_cast<std::size_t>(idx)] + length > t ? idx : -1;
}

double fuse_family(const std::vector<std::int64_t>& starts, std::int64_t length,
                   const std::vector<double>& fractions, std::int64_t t) {
    if (length == 1) {
        const auto idx = covering_index(starts, length, t);
        return idx < 0 ? 0.0 : fractions[static_cast<std::size_t>(idx)];
    }
    const auto bwd = backward_index(starts, length, t);
    const auto fwd = forward_index(starts, t);
    if (bwd >= 0 && fwd >= 0)
        return std::min(fractions[static_cast<std::size_t>(bwd)],
                        fractions[static_cast<std::size_t>(fwd)]);
    if (bwd >= 0) return fractions[static_cast<std::size_t>(bwd)];
    if (fwd >= 0) return fractions[static_cast<std::size_t>(fwd)];
    return 0.0;
}

}  // namespace

double fb_fraction(const NominalModel& model, std::size_t family,
                   const Eigen::MatrixXd& trial_values, std::int64_t t) {
    if (t < 0 || t >= model.n_timesteps()) throw Error("fb_fraction: t outside the sequence");
    const auto& starts = model.positions(family);
    const auto length = model.families()[family].length;
    if (length == 1) {
        const auto idx = covering_index(starts, length, t);
        return idx < 0 ? 0.0 : window_fraction(model, family, static_cast<std::size_t>(idx), trial_values);
    }
    const auto bwd = backward_index(starts, length, t);
    const auto fwd = forward_index(starts, t);
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    if (bwd >= 0) {
        best = std::min(best, window_fraction(model, family, static_cast<std::size_t>(bwd), trial_values));
        any = true;
    }
    if (fwd >= 0) {
        best = std::min(best, window_fraction(model, family, static_cast<std::size_t>(fwd), trial_values));
        any = true;
    }
    return any ? best : 0.0;
}

double overall_fraction(const NominalModel& model, const Eigen::MatrixXd& trial_values,
                        std::int64_t t) {
    double best = 0.0;
    for (std::size_t f = 0; f < model.families().size(); ++f)
        best = std::max(best, fb_fraction(model, f, trial_values, t));
    return best;
}

DetectionTrace detect_trial(const NominalModel& model, const Trial& trial,
                            bool keep_window_fractions) {
    const auto n = model.n_timesteps();
    if (trial.values.rows() != n ||
        trial.values.cols() != static_cast<Eigen::Index>(model.n_params()))
        throw Error("detect_trial: trial " + std::to_string(trial.trial_id) +
                    " does not match the model dimensions");

    DetectionTrace trace;
    const auto n_families = model.families().size();
    trace.family_fb.assign(n_families, std::vector<double>(static_cast<std::size_t>(n), 0.0));
    trace.overall.assign(static_cast<std::size_t>(n), 0.0);
    trace.flags.assign(static_cast<std::size_t>(n), 0);

    std::vector<std::vector<double>> fractions(n_families);
    std::vector<std::vector<double>> distances(keep_window_fractions ? n_families : 0);
    for (std::size_t f = 0; f < n_families; ++f) {
        trace.family_lengths.push_back(model.families()[f].length);
        const auto& starts = model.positions(f);
        fractions[f].resize(starts.size());
        if (keep_window_fractions) distances[f].resize(starts.size());
        for (std::size_t pi = 0; pi < starts.size(); ++pi) {
            const double d = model.max_param_mdist(f, pi, trial.values);
            fractions[f][pi] = detection_fraction(d, model.cutoff(f, pi));
            if (keep_window_fractions) distances[f][pi] = d;
        }
    }

    for (std::int64_t t = 0; t < n; ++t) {
        double best = 0.0;
        for (std::size_t f = 0; f < n_families; ++f) {
            const double fb = fuse_family(model.positions(f), model.families()[f].length,
                                          fractions[f], t);
            trace.family_fb[f][static_cast<std::size_t>(t)] = fb;
            best = std::max(best, fb);
        }
        trace.overall[static_cast<std::size_t>(t)] = best;
        trace.flags[static_cast<std::size_t>(t)] = best > 1.0 ? 1 : 0;
    }
    if (keep_window_fractions) {
        trace.window_fractions = std::move(fractions);
        trace.window_distances = std::move(distances);
    }
    return trace;
}

void write_trace_csv(const std::filesystem::path& path, const DetectionTrace& trace, double dt) {
    std::string out = "t";
    for (auto length : trace.family_lengths) out += ",F_fb_" + std::to_string(length);
    out += ",F_ovr,flag\n";
    for (std::size_t t = 0; t < trace.overall.size(); ++t) {
        out += format_double(static_cast<double>(t) * dt);
        for (const auto& fb : trace.family_fb) {
            out += ',';
            out += format_double(fb[t]);
        }
        out += ',';
        out += format_double(trace.overall[t]);
        out += ',';
        out += trace.flags[t] ? '1' : '0';
        out += '\n';
    }
    write_text_file(path, out);
}

DetectionTrace read_trace_csv(const std::filesystem::path& path) {
    const auto content = read_text_file(path);
    DetectionTrace trace;
    std::size_t pos = 0;
    bool header = true;
    std::size_t n_families = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        const std::string_view line(content.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (header) {
            if (fields.size() < 3 || fields.front() != "t" || fields.back() != "flag")
                throw Error("bad trace header in " + path.string());
            n_families = fields.size() - 3;
            for (std::size_t f = 0; f < n_families; ++f) {
                const auto name = fields[f + 1];
                if (!name.starts_with("F_fb_")) throw Error("bad trace column in " + path.string());
                trace.family_lengths.push_back(parse_int(name.substr(5)));
            }
            trace.family_fb.assign(n_families, {});
            header = false;
            continue;
        }
        if (fields.size() != n_families + 3) throw Error("bad trace row in " + path.string());
        for (std::size_t f = 0; f < n_families; ++f)
            trace.family_fb[f].push_back(parse_double(fields[f + 1], true));
        trace.overall.push_back(parse_double(fields[n_families + 1], true));
        trace.flags.push_back(fields[n_families + 2] == "1" ? 1 : 0);
    }
    return trace;
}

bool flagged_inside(const DetectionTrace& trace, double dt, double start_s, double end_s) {
    for (std::size_t t = 0; t < trace.flags.size(); ++t) {
        const double time = static_cast<double>(t) * dt;
        if (time >= start_s && time <= end_s && trace.flags[t]) return true;
    }
    return false;
}

}  // namespace mdetect
