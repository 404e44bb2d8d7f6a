#pragma once

#include <cstddef>
#include <vector>

namespace mdetect {

/// Nearest-rank quantile: the ceil(p*n)-th order statistic of `values`
/// (1-indexed). p in (0, 1]. Does not interpolate.
double nearest_rank_quantile(std::vector<double> values, double p);

/// Spearman rank correlation with average ranks for ties.
/// Returns 0 for degenerate inputs (all-tied either side).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Inverse CDF of the chi-squared distribution with k degrees of freedom.
double chi2_quantile(double p, double k);

/// Quantile of the chi distribution (sqrt of chi-squared).
double chi_quantile(double p, double k);

/// Gaussian reference cutoff for the max over n_params independent
/// chi(dof)-distributed distances at probability level p_star:
/// chi_quantile(p_star^(1/n_params), dof).
double gaussian_max_chi_cutoff(double p_star, std::size_t n_params, std::size_t dof);

/// Sample mean and unbiased standard deviation.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& values);

}  // namespace mdetect
