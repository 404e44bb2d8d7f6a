#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdetect/dataset.hpp"
#include "mdetect/windows.hpp"

namespace mdetect {

struct ChannelStats {
    double mean = 0.0;
    double std = 0.0;
};

/// How the empirical cutoffs are formed from the fitting ensemble's
/// max-over-parameter distances. per_position keeps one quantile per window
/// start (nominal behavior is phase-dependent); pooled shares one family
/// quantile across positions, which is the lower-variance estimator when
/// window statistics are comparable across starts.
enum class CutoffPooling { per_position, pooled };
std::string to_string(CutoffPooling p);
CutoffPooling cutoff_pooling_from_string(const std::string& s);

/// sqrt(r^T (cov + theta^2 I)^-1 r) by Cholesky factorization and forward
/// substitution. This is the production solve path behind window_mdist.
double regularized_mdist(const Eigen::MatrixXd& cov, const Eigen::VectorXd& residual,
                         double theta);

/// Per-parameter, per-window nominal statistics with the adaptive empirical
/// cutoffs that turn M-distances into detection fractions.
///
/// Channels are z-scored by the nominal ensemble's per-channel global
/// mean/std before any window statistics are formed; theta is dimensionless
/// and regularizes in those units. The sample mean and covariance are taken
/// across the nominal ensemble for every window slice. Covariances of
/// overlapping windows share entries, so the model stores one banded
/// time-covariance per parameter and treats each window covariance as a view
/// into the band. Regularization enters only as theta^2*I at solve time; the
/// stored covariance is never modified.
class NominalModel {
  public:
    /// Fits means, covariances, and cutoffs. Requires >= 2 nominal trials;
    /// rejects trials with anomaly metadata or non-nominal labels.
    /// The cutoff for window w is the nearest-rank p_star quantile of the
    /// fitting trials' max-over-parameter M-distances on w.
    static NominalModel fit(const std::vector<const Trial*>& nominal_trials,
                            const DatasetManifest& manifest,
                            const std::vector<WindowFamily>& families, double theta = 1e-4,
                            double p_star = 0.99, unsigned jobs = 1,
                            CutoffPooling pooling = CutoffPooling::per_position);

    double theta() const { return theta_; }
    double p_star() const { return p_star_; }
    CutoffPooling pooling() const { return pooling_; }
    std::int64_t n_timesteps() const { return n_timesteps_; }
    double dt() const { return dt_; }
    std::size_t n_params() const { return parameter_names_.size(); }
    std::int64_t n_nominal() const { return n_nominal_; }
    const std::vector<std::string>& parameter_names() const { return parameter_names_; }
    const std::vector<WindowFamily>& families() const { return families_; }
    const std::vector<std::int64_t>& positions(std::size_t family) const {
        return positions_[family];
    }
    const std::vector<ChannelStats>& channel_stats() const { return channel_stats_; }

    /// sqrt((x-mu)^T (Sigma + theta^2 I)^-1 (x-mu)) via the cached Cholesky
    /// factor. x is the window slice (family dim) of one parameter.
    double window_mdist(std::size_t family, std::size_t pos_index, std::size_t param,
                        const Eigen::VectorXd& x) const;

    /// Same distance with an alternate regularizer; refactors on the fly.
    double window_mdist_with_theta(std::size_t family, std::size_t pos_index, std::size_t param,
                                   const Eigen::VectorXd& x, double theta) const;

    /// Max over parameters of window_mdist for a trial's window slice.
    double max_param_mdist(std::size_t family, std::size_t pos_index,
                           const Eigen::MatrixXd& trial_values) const;

    /// Empirical cutoff d* for one window.
    double cutoff(std::size_t family, std::size_t pos_index) const {
        return cutoffs_[family][pos_index];
    }

    Eigen::VectorXd window_mean(std::size_t family, std::size_t pos_index,
                                std::size_t param) const;
    Eigen::MatrixXd window_cov(std::size_t family, std::size_t pos_index, std::size_t param) const;

    /// Extracts the window slice of one parameter column (raw units;
    /// window_mdist applies the channel transform itself).
    Eigen::VectorXd window_slice(std::size_t family, std::size_t pos_index, std::size_t param,
                                 const Eigen::MatrixXd& trial_values) const;

    /// (value - channel mean) / channel std for one parameter.
    double to_z(std::size_t param, double value) const;

    struct CutoffRow {
        std::int64_t family_length = 0;
        std::int64_t position = 0;
        double cutoff = 0.0;
        double gaussian_reference = 0.0;  // max-of-params chi quantile
    };
    /// Empirical cutoffs next to the Gaussian chi-based reference, so the
    /// heavier-than-Gaussian tails of real ensembles can be inspected.
    std::vector<CutoffRow> cutoff_report() const;

    void save(const std::filesystem::path& dir, const std::string& config_hash = "",
              std::uint64_t seed = 0) const;
    static NominalModel load(const std::filesystem::path& dir, unsigned jobs = 1);

    static constexpr int kFormatVersion = 1;

  private:
    NominalModel() = default;
    void build_factors(unsigned jobs);
    Eigen::MatrixXd regularized_window_cov(std::size_t family, std::size_t pos_index,
                                           std::size_t param, double theta) const;

    double theta_ = 1e-4;
    double p_star_ = 0.99;
    CutoffPooling pooling_ = CutoffPooling::per_position;
    std::int64_t n_timesteps_ = 0;
    double dt_ = 0.0;
    std::int64_t n_nominal_ = 0;
    std::int64_t band_width_ = 0;
    std::vector<std::string> parameter_names_;
    std::vector<WindowFamily> families_;
    std::vector<std::vector<std::int64_t>> positions_;  // per family

    // Per parameter: mean series (n) and banded covariance, band[d] holding
    // cov(t, t+d) for t in [0, n-d).
    std::vector<Eigen::VectorXd> mean_;
    std::vector<std::vector<Eigen::VectorXd>> cov_band_;

    // Packed lower-triangular Cholesky factors of (Sigma + theta^2 I),
    // contiguous per family: [position][param][packed i(i+1)/2 + j].
    std::vector<std::vector<double>> factors_;
    std::vector<std::vector<double>> cutoffs_;  // per family, per position

    std::vector<ChannelStats> channel_stats_;
};

}  // namespace mdetect
