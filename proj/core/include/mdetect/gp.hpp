#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "mdetect/dataset.hpp"

namespace mdetect::gp {

enum class KernelKind { nominal, anomalous };

/// Zero-mean GP kernels on [0, 1]:
///   k_nom(t, t')  = 0.3 + 0.4 t t' + 3 (t t')^2 + t t'^2 + t' t^2
///   W_[a,b](t,t') = relu(1 - |(2t - (a+b))/(b-a)|) * relu(1 - |(2t' - (a+b))/(b-a)|)
///   k_anom        = k_nom + amplitude * W_[a,b] * exp(-2 sin^2(frequency * (t - t')))
/// The sine argument is read as frequency*(t - t'), the symmetric periodic
/// form; the printed asymmetric variant is not a valid kernel.
struct KernelSpec {
    KernelKind kind = KernelKind::nominal;
    double window_a = 0.0;
    double window_b = 0.0;
    double anomaly_amplitude = 0.3;
    double anomaly_frequency = 10.0 * 3.14159265358979323846;  // rad per unit time
    double jitter = 1e-10;

    void validate() const;
};

/// W_[a,b], the separable window weight. In [0, 1], zero outside [a, b].
double window_weight(double a, double b, double t, double t2);

/// Kernel value; symmetric in (t, t2).
double kernel_eval(const KernelSpec& spec, double t, double t2);

/// Gram matrix on a strictly increasing grid, spec.jitter added on the
/// diagonal.
Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const std::vector<double>& grid);

/// Holds one Cholesky factor so many seeds can be drawn from one kernel.
/// Jitter escalates x10 from spec.jitter up to 1e-6 before reporting the
/// kernel indefinite.
class GpSampler {
  public:
    GpSampler(KernelSpec spec, std::vector<double> grid);

    /// L * z with z a seeded standard normal vector. Same seed, same series.
    Eigen::VectorXd sample(std::uint64_t seed) const;

    double jitter_used() const { return jitter_used_; }
    const std::vector<double>& grid() const { return grid_; }
    const KernelSpec& spec() const { return spec_; }

  private:
    KernelSpec spec_;
    std::vector<double> grid_;
    Eigen::MatrixXd chol_lower_;
    double jitter_used_ = 0.0;
};

/// One-shot convenience around GpSampler.
Eigen::VectorXd sample_gp(const KernelSpec& spec, const std::vector<double>& grid,
                          std::uint64_t seed);

/// Single-channel trial with exactly known truth: grid points inside
/// [window_a, window_b] carry class_id, everything else nominal.
Trial make_gp_trial(const KernelSpec& spec, const std::vector<double>& grid, std::uint64_t seed,
                    std::int64_t trial_id = 0, int class_id = 1);
Trial make_gp_trial(const GpSampler& sampler, std::uint64_t seed, std::int64_t trial_id = 0,
                    int class_id = 1);

std::vector<double> uniform_grid(std::size_t points, double lo = 0.0, double hi = 1.0);

/// Manifest for GP datasets: one channel "y", classes {nominal, anomaly}.
DatasetManifest gp_manifest(std::size_t grid_points, std::uint64_t seed);

}  // namespace mdetect::gp
