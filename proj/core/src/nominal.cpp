#include "mdetect/nominal.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"
#include "mdetect/parallel.hpp"
#include "mdetect/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mdetect {

std::string to_string(CutoffPooling p) {
    return p == CutoffPooling::pooled ? "pooled" : "per_position";
}

CutoffPooling cutoff_pooling_from_string(const std::string& s) {
    if (s == "pooled") return CutoffPooling::pooled;
    if (s == "per_position") return CutoffPooling::per_position;
    throw Error("unknown cutoff pooling '" + s + "'");
}

void WindowFamily::validate(std::int64_t n_timesteps) const {
    if (length < 1 || length > n_timesteps)
        throw Error("WindowFamily: length must be in [1, n_timesteps]");
    if (stride < 1) throw Error("WindowFamily: stride must be >= 1");
    if (subsample < 1 || subsample > length)
        throw Error("WindowFamily: subsample must be in [1, length]");
}

std::vector<std::int64_t> WindowFamily::start_positions(std::int64_t n_timesteps) const {
    validate(n_timesteps);
    std::vector<std::int64_t> starts;
    const std::int64_t last = n_timesteps - length;
    for (std::int64_t p = 0; p <= last; p += stride) starts.push_back(p);
    if (starts.empty() || starts.back() != last) starts.push_back(last);  // clamped final window
    return starts;
}

std::vector<WindowFamily> default_window_families() {
    return {{1, 1, 1}, {20, 1, 1}, {100, 5, 1}};
}

namespace {

std::size_t packed_size(std::int64_t dim) {
    return static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim + 1) / 2;
}

/// Solves L y = r for packed row-major lower-triangular L and returns |y|^2,
/// which equals r^T (L L^T)^-1 r.
double packed_solve_squared_norm(const double* factor, const Eigen::VectorXd& r) {
    const auto dim = r.size();
    double acc = 0.0;
    Eigen::VectorXd y(dim);
    const double* row = factor;
    for (Eigen::Index i = 0; i < dim; ++i) {
        double s = r[i];
        for (Eigen::Index j = 0; j < i; ++j) s -= row[j] * y[j];
        y[i] = s / row[i];
        acc += y[i] * y[i];
        row += i + 1;
    }
    return acc;
}

void pack_lower(const Eigen::MatrixXd& lower, double* out) {
    const auto dim = lower.rows();
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) *out++ = lower(i, j);
}

}  // namespace

double regularized_mdist(const Eigen::MatrixXd& cov, const Eigen::VectorXd& residual,
                         double theta) {
    if (cov.rows() != cov.cols() || cov.rows() != residual.size())
        throw Error("regularized_mdist: dimension mismatch");
    Eigen::MatrixXd reg = cov;
    reg.diagonal().array() += theta * theta;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success) throw Error("regularized_mdist: factorization failed");
    std::vector<double> packed(packed_size(cov.rows()));
    pack_lower(llt.matrixL(), packed.data());
    return std::sqrt(packed_solve_squared_norm(packed.data(), residual));
}

Eigen::VectorXd NominalModel::window_slice(std::size_t family, std::size_t pos_index,
                                           std::size_t param,
                                           const Eigen::MatrixXd& trial_values) const {
    const auto& fam = families_[family];
    const std::int64_t start = positions_[family][pos_index];
    Eigen::VectorXd x(fam.dim());
    for (std::int64_t k = 0; k < fam.dim(); ++k)
        x[k] = trial_values(start + k * fam.subsample, static_cast<Eigen::Index>(param));
    return x;
}

Eigen::VectorXd NominalModel::window_mean(std::size_t family, std::size_t pos_index,
                                          std::size_t param) const {
    const auto& fam = families_[family];
    const std::int64_t start = positions_[family][pos_index];
    Eigen::VectorXd mu(fam.dim());
    for (std::int64_t k = 0; k < fam.dim(); ++k) mu[k] = mean_[param][start + k * fam.subsample];
    return mu;
}

Eigen::MatrixXd NominalModel::window_cov(std::size_t family, std::size_t pos_index,
                                         std::size_t param) const {
    const auto& fam = families_[family];
    const std::int64_t start = positions_[family][pos_index];
    const std::int64_t dim = fam.dim();
    Eigen::MatrixXd cov(dim, dim);
    for (std::int64_t r = 0; r < dim; ++r) {
        for (std::int64_t c = 0; c <= r; ++c) {
            const std::int64_t tr = start + r * fam.subsample;
            const std::int64_t tc = start + c * fam.subsample;
            const std::int64_t lo = std::min(tr, tc);
            const std::int64_t delta = std::abs(tr - tc);
            const double v = cov_band_[param][static_cast<std::size_t>(delta)][lo];
            cov(r, c) = v;
            cov(c, r) = v;
        }
    }
    return cov;
}

Eigen::MatrixXd NominalModel::regularized_window_cov(std::size_t family, std::size_t pos_index,
                                                     std::size_t param, double theta) const {
    Eigen::MatrixXd cov = window_cov(family, pos_index, param);
    cov.diagonal().array() += theta * theta;
    return cov;
}

double NominalModel::to_z(std::size_t param, double value) const {
    const auto& cs = channel_stats_[param];
    const double scale = cs.std > 0.0 ? cs.std : 1.0;
    return (value - cs.mean) / scale;
}

double NominalModel::window_mdist(std::size_t family, std::size_t pos_index, std::size_t param,
                                  const Eigen::VectorXd& x) const {
    const auto& fam = families_[family];
    if (x.size() != fam.dim()) throw Error("window_mdist: slice has wrong dimension");
    if (!x.allFinite()) throw Error("window_mdist: non-finite input");
    Eigen::VectorXd r(x.size());
    const Eigen::VectorXd mu = window_mean(family, pos_index, param);
    for (Eigen::Index k = 0; k < x.size(); ++k) r[k] = to_z(param, x[k]) - mu[k];
    const std::size_t offset =
        (pos_index * parameter_names_.size() + param) * packed_size(fam.dim());
    return std::sqrt(packed_solve_squared_norm(factors_[family].data() + offset, r));
}

double NominalModel::window_mdist_with_theta(std::size_t family, std::size_t pos_index,
                                             std::size_t param, const Eigen::VectorXd& x,
                                             double theta) const {
    Eigen::VectorXd r(x.size());
    const Eigen::VectorXd mu = window_mean(family, pos_index, param);
    for (Eigen::Index k = 0; k < x.size(); ++k) r[k] = to_z(param, x[k]) - mu[k];
    return regularized_mdist(window_cov(family, pos_index, param), r, theta);
}

double NominalModel::max_param_mdist(std::size_t family, std::size_t pos_index,
                                     const Eigen::MatrixXd& trial_values) const {
    if (trial_values.rows() != n_timesteps_ ||
        trial_values.cols() != static_cast<Eigen::Index>(parameter_names_.size()))
        throw Error("max_param_mdist: trial dimensions do not match the model");
    double best = 0.0;
    for (std::size_t p = 0; p < parameter_names_.size(); ++p)
        best = std::max(best,
                        window_mdist(family, pos_index, p, window_slice(family, pos_index, p, trial_values)));
    return best;
}

void NominalModel::build_factors(unsigned jobs) {
    const std::size_t n_params = parameter_names_.size();
    factors_.assign(families_.size(), {});
    for (std::size_t f = 0; f < families_.size(); ++f) {
        const auto& fam = families_[f];
        const auto& starts = positions_[f];
        factors_[f].resize(starts.size() * n_params * packed_size(fam.dim()));
        parallel_for(starts.size(), jobs, [&](std::size_t pi) {
            for (std::size_t p = 0; p < n_params; ++p) {
                Eigen::MatrixXd cov = regularized_window_cov(f, pi, p, theta_);
                Eigen::LLT<Eigen::MatrixXd> llt(cov);
                if (llt.info() != Eigen::Success)
                    throw Error("NominalModel: covariance factorization failed at family " +
                                std::to_string(fam.length) + " position " +
                                std::to_string(starts[pi]) + " param " + std::to_string(p));
                const Eigen::MatrixXd lower = llt.matrixL();
                pack_lower(lower,
                           factors_[f].data() + (pi * n_params + p) * packed_size(fam.dim()));
            }
        });
    }
}

NominalModel NominalModel::fit(const std::vector<const Trial*>& nominal_trials,
                               const DatasetManifest& manifest,
                               const std::vector<WindowFamily>& families, double theta,
                               double p_star, unsigned jobs, CutoffPooling pooling) {
    if (nominal_trials.size() < 2)
        throw Error("NominalModel::fit: need at least 2 nominal trials, got " +
                    std::to_string(nominal_trials.size()));
    if (!(theta > 0.0)) throw Error("NominalModel::fit: theta must be positive");
    if (!(p_star > 0.0 && p_star < 1.0)) throw Error("NominalModel::fit: p_star outside (0, 1)");
    for (const Trial* t : nominal_trials) {
        if (t->anomaly)
            throw Error("NominalModel::fit: trial " + std::to_string(t->trial_id) +
                        " carries anomaly metadata");
        for (int c : t->labels.classes)
            if (c != 0)
                throw Error("NominalModel::fit: trial " + std::to_string(t->trial_id) +
                            " has non-nominal labels");
        manifest.validate_trial(*t);
    }

    NominalModel m;
    m.theta_ = theta;
    m.p_star_ = p_star;
    m.pooling_ = pooling;
    m.n_timesteps_ = manifest.n_timesteps;
    m.dt_ = manifest.dt;
    m.n_nominal_ = static_cast<std::int64_t>(nominal_trials.size());
    m.parameter_names_ = manifest.parameter_names;
    m.families_ = families;
    if (families.empty()) throw Error("NominalModel::fit: no window families");
    for (const auto& fam : families) m.positions_.push_back(fam.start_positions(m.n_timesteps_));

    std::int64_t band = 1;
    for (const auto& fam : families)
        band = std::max(band, (fam.dim() - 1) * fam.subsample + 1);
    m.band_width_ = std::min(band, m.n_timesteps_);

    const std::size_t n_params = m.parameter_names_.size();
    const auto n = m.n_timesteps_;
    const auto n_trials = static_cast<Eigen::Index>(nominal_trials.size());

    m.mean_.resize(n_params);
    m.cov_band_.resize(n_params);
    m.channel_stats_.resize(n_params);

    for (std::size_t p = 0; p < n_params; ++p) {
        // Trials-by-time matrix of one channel, z-scored by the ensemble
        // global stats, then centered by the per-timestep mean.
        Eigen::MatrixXd data(n_trials, n);
        for (Eigen::Index i = 0; i < n_trials; ++i)
            data.row(i) = nominal_trials[static_cast<std::size_t>(i)]
                              ->values.col(static_cast<Eigen::Index>(p))
                              .transpose();
        m.channel_stats_[p].mean = data.mean();
        const double var =
            (data.array() - m.channel_stats_[p].mean).square().sum() /
            std::max<double>(1.0, static_cast<double>(data.size()) - 1.0);
        m.channel_stats_[p].std = std::sqrt(var);
        const double scale = m.channel_stats_[p].std > 0.0 ? m.channel_stats_[p].std : 1.0;
        data = (data.array() - m.channel_stats_[p].mean) / scale;

        m.mean_[p] = data.colwise().mean();
        data.rowwise() -= m.mean_[p].transpose();

        auto& band_p = m.cov_band_[p];
        band_p.resize(static_cast<std::size_t>(m.band_width_));
        const double norm = 1.0 / static_cast<double>(n_trials - 1);
        for (std::int64_t d = 0; d < m.band_width_; ++d) {
            const auto cols = n - d;
            band_p[static_cast<std::size_t>(d)] =
                (data.leftCols(cols).array() * data.rightCols(cols).array())
                    .colwise()
                    .sum()
                    .transpose() *
                norm;
        }
    }

    m.build_factors(jobs);

    // Cutoffs: nearest-rank p_star quantile over the fitting ensemble of the
    // max-over-parameter distances, per window position.
    m.cutoffs_.resize(families.size());
    for (std::size_t f = 0; f < families.size(); ++f) {
        const auto& starts = m.positions_[f];
        std::vector<std::vector<double>> dists(starts.size());
        parallel_for(starts.size(), jobs, [&](std::size_t pi) {
            std::vector<double> d(nominal_trials.size());
            for (std::size_t i = 0; i < nominal_trials.size(); ++i)
                d[i] = m.max_param_mdist(f, pi, nominal_trials[i]->values);
            dists[pi] = std::move(d);
        });
        m.cutoffs_[f].resize(starts.size());
        if (pooling == CutoffPooling::pooled) {
            std::vector<double> all;
            all.reserve(starts.size() * nominal_trials.size());
            for (const auto& d : dists) all.insert(all.end(), d.begin(), d.end());
            const double cutoff = nearest_rank_quantile(all, p_star);
            std::fill(m.cutoffs_[f].begin(), m.cutoffs_[f].end(), cutoff);
        } else {
            for (std::size_t pi = 0; pi < starts.size(); ++pi)
                m.cutoffs_[f][pi] = nearest_rank_quantile(dists[pi], p_star);
        }
    }
    return m;
}

std::vector<NominalModel::CutoffRow> NominalModel::cutoff_report() const {
    std::vector<CutoffRow> rows;
    for (std::size_t f = 0; f < families_.size(); ++f) {
        const double reference =
            gaussian_max_chi_cutoff(p_star_, parameter_names_.size(),
                                    static_cast<std::size_t>(families_[f].dim()));
        for (std::size_t pi = 0; pi < positions_[f].size(); ++pi)
            rows.push_back({families_[f].length, positions_[f][pi], cutoffs_[f][pi], reference});
    }
    return rows;
}

void NominalModel::save(const fs::path& dir, const std::string& config_hash,
                        std::uint64_t seed) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create model directory " + dir.string() + ": " + ec.message());

    json header;
    header["format_version"] = kFormatVersion;
    header["theta"] = theta_;
    header["p_star"] = p_star_;
    header["cutoff_pooling"] = to_string(pooling_);
    header["n_timesteps"] = n_timesteps_;
    header["dt"] = dt_;
    header["n_nominal"] = n_nominal_;
    header["band_width"] = band_width_;
    header["parameter_names"] = parameter_names_;
    header["config_hash"] = config_hash;
    header["seed"] = seed;
    json fams = json::array();
    for (const auto& fam : families_)
        fams.push_back(json{{"length", fam.length}, {"stride", fam.stride},
                            {"subsample", fam.subsample}});
    header["families"] = fams;
    json stats = json::array();
    for (const auto& cs : channel_stats_)
        stats.push_back(json{{"mean", cs.mean}, {"std", cs.std}});
    header["channel_stats"] = stats;
    write_text_file(dir / "header.json", header.dump(2) + "\n");

    std::vector<double> means;
    for (const auto& mu : mean_) means.insert(means.end(), mu.data(), mu.data() + mu.size());
    write_doubles(dir / "mean.bin", means);

    std::vector<double> band;
    for (const auto& band_p : cov_band_)
        for (const auto& diag : band_p) band.insert(band.end(), diag.data(), diag.data() + diag.size());
    write_doubles(dir / "cov_band.bin", band);

    std::string cutoffs = "family_length,position,cutoff\n";
    for (std::size_t f = 0; f < families_.size(); ++f)
        for (std::size_t pi = 0; pi < positions_[f].size(); ++pi) {
            cutoffs += std::to_string(families_[f].length);
            cutoffs += ',';
            cutoffs += std::to_string(positions_[f][pi]);
            cutoffs += ',';
            cutoffs += format_double(cutoffs_[f][pi]);
            cutoffs += '\n';
        }
    write_text_file(dir / "cutoffs.csv", cutoffs);
}

NominalModel NominalModel::load(const fs::path& dir, unsigned jobs) {
    const auto header_path = dir / "header.json";
    if (!fs::exists(header_path)) throw Error("missing model header: " + header_path.string());
    const json header = json::parse(read_text_file(header_path));
    if (header.at("format_version").get<int>() > kFormatVersion)
        throw Error("model format_version newer than supported");

    NominalModel m;
    m.theta_ = header.at("theta").get<double>();
    m.p_star_ = header.at("p_star").get<double>();
    m.pooling_ = cutoff_pooling_from_string(
        header.value("cutoff_pooling", std::string("per_position")));
    m.n_timesteps_ = header.at("n_timesteps").get<std::int64_t>();
    m.dt_ = header.at("dt").get<double>();
    m.n_nominal_ = header.at("n_nominal").get<std::int64_t>();
    m.band_width_ = header.at("band_width").get<std::int64_t>();
    m.parameter_names_ = header.at("parameter_names").get<std::vector<std::string>>();
    for (const auto& fj : header.at("families")) {
        WindowFamily fam;
        fam.length = fj.at("length").get<std::int64_t>();
        fam.stride = fj.at("stride").get<std::int64_t>();
        fam.subsample = fj.at("subsample").get<std::int64_t>();
        m.families_.push_back(fam);
        m.positions_.push_back(fam.start_positions(m.n_timesteps_));
    }
    for (const auto& sj : header.at("channel_stats"))
        m.channel_stats_.push_back({sj.at("mean").get<double>(), sj.at("std").get<double>()});

    const std::size_t n_params = m.parameter_names_.size();
    const auto n = m.n_timesteps_;

    const auto means = read_doubles(dir / "mean.bin");
    if (means.size() != n_params * static_cast<std::size_t>(n))
        throw Error("model mean.bin has unexpected size");
    m.mean_.resize(n_params);
    for (std::size_t p = 0; p < n_params; ++p)
        m.mean_[p] = Eigen::Map<const Eigen::VectorXd>(means.data() + p * static_cast<std::size_t>(n), n);

    const auto band = read_doubles(dir / "cov_band.bin");
    std::size_t per_param = 0;
    for (std::int64_t d = 0; d < m.band_width_; ++d)
        per_param += static_cast<std::size_t>(n - d);
    if (band.size() != per_param * n_params)
        throw Error("model cov_band.bin has unexpected size");
    m.cov_band_.resize(n_params);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < n_params; ++p) {
        m.cov_band_[p].resize(static_cast<std::size_t>(m.band_width_));
        for (std::int64_t d = 0; d < m.band_width_; ++d) {
            const auto len = static_cast<std::size_t>(n - d);
            m.cov_band_[p][static_cast<std::size_t>(d)] =
                Eigen::Map<const Eigen::VectorXd>(band.data() + offset,
                                                  static_cast<Eigen::Index>(len));
            offset += len;
        }
    }

    m.cutoffs_.resize(m.families_.size());
    for (std::size_t f = 0; f < m.families_.size(); ++f)
        m.cutoffs_[f].assign(m.positions_[f].size(), 0.0);
    const auto cutoff_text = read_text_file(dir / "cutoffs.csv");
    std::size_t pos = 0;
    bool first = true;
    std::vector<std::size_t> fill(m.families_.size(), 0);
    while (pos < cutoff_text.size()) {
        std::size_t eol = cutoff_text.find('\n', pos);
        if (eol == std::string::npos) eol = cutoff_text.size();
        const std::string_view line(cutoff_text.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) throw Error("bad cutoffs.csv row");
        const auto length = parse_int(fields[0]);
        std::size_t f = m.families_.size();
        for (std::size_t i = 0; i < m.families_.size(); ++i)
            if (m.families_[i].length == length && fill[i] < m.positions_[i].size()) {
                f = i;
                break;
            }
        if (f == m.families_.size()) throw Error("cutoffs.csv does not match families");
        m.cutoffs_[f][fill[f]++] = parse_double(fields[2]);
    }
    for (std::size_t f = 0; f < m.families_.size(); ++f)
        if (fill[f] != m.positions_[f].size())
            throw Error("cutoffs.csv is missing positions for family " +
                        std::to_string(m.families_[f].length));

    m.build_factors(jobs);
    return m;
}

}  // namespace mdetect
