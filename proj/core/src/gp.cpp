#include "mdetect/gp.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "mdetect/error.hpp"
#include "mdetect/rng.hpp"

namespace mdetect::gp {

void KernelSpec::validate() const {
    if (kind == KernelKind::anomalous && !(window_a < window_b))
        throw Error("KernelSpec: anomalous kernel requires window_a < window_b");
    if (anomaly_amplitude < 0.0) throw Error("KernelSpec: anomaly_amplitude must be >= 0");
    if (!(jitter > 0.0)) throw Error("KernelSpec: jitter must be positive");
}

namespace {
double relu(double x) { return x > 0.0 ? x : 0.0; }

double k_nominal(double t, double t2) {
    const double tt = t * t2;
    return 0.3 + 0.4 * tt + 3.0 * tt * tt + t * t2 * t2 + t2 * t * t;
}
}  // namespace

double window_weight(double a, double b, double t, double t2) {
    const double mid = a + b;
    const double span = b - a;
    const double wt = relu(1.0 - std::fabs((2.0 * t - mid) / span));
    const double wt2 = relu(1.0 - std::fabs((2.0 * t2 - mid) / span));
    return wt * wt2;
}

double kernel_eval(const KernelSpec& spec, double t, double t2) {
    double k = k_nominal(t, t2);
    if (spec.kind == KernelKind::anomalous) {
        const double s = std::sin(spec.anomaly_frequency * (t - t2));
        k += spec.anomaly_amplitude * window_weight(spec.window_a, spec.window_b, t, t2) *
             std::exp(-2.0 * s * s);
    }
    return k;
}

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const std::vector<double>& grid) {
    spec.validate();
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw Error("gram_matrix: grid must be strictly increasing");
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = kernel_eval(spec, grid[static_cast<std::size_t>(i)],
                                         grid[static_cast<std::size_t>(j)]);
            gram(i, j) = k;
            gram(j, i) = k;
        }
        gram(i, i) += spec.jitter;
    }
    return gram;
}

GpSampler::GpSampler(KernelSpec spec, std::vector<double> grid)
    : spec_(spec), grid_(std::move(grid)) {
    Eigen::MatrixXd gram = gram_matrix(spec_, grid_);
    const auto n = gram.rows();
    double jitter = spec_.jitter;
    for (;;) {
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() == Eigen::Success) {
            chol_lower_ = llt.matrixL();
            jitter_used_ = jitter;
            return;
        }
        if (jitter >= 1e-6)
            throw Error("GpSampler: kernel matrix indefinite even at jitter 1e-6");
        const double next = jitter * 10.0;
        gram.diagonal().array() += next - jitter;
        jitter = next;
        (void)n;
    }
}

Eigen::VectorXd GpSampler::sample(std::uint64_t seed) const {
    Rng rng(seed);
    Eigen::VectorXd z(chol_lower_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return chol_lower_ * z;
}

Eigen::VectorXd sample_gp(const KernelSpec& spec, const std::vector<double>& grid,
                          std::uint64_t seed) {
    return GpSampler(spec, grid).sample(seed);
}

Trial make_gp_trial(const GpSampler& sampler, std::uint64_t seed, std::int64_t trial_id,
                    int class_id) {
    const auto& spec = sampler.spec();
    const auto& grid = sampler.grid();
    if (spec.kind == KernelKind::anomalous &&
        (spec.window_a < grid.front() || spec.window_b > grid.back()))
        throw Error("make_gp_trial: anomaly window outside grid span");

    Trial trial;
    trial.trial_id = trial_id;
    const auto n = static_cast<Eigen::Index>(grid.size());
    trial.values.resize(n, 1);
    trial.values.col(0) = sampler.sample(seed);
    trial.labels.classes.assign(grid.size(), 0);
    trial.labels.provenance = LabelProvenance::baseline;
    if (spec.kind == KernelKind::anomalous) {
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (grid[i] >= spec.window_a && grid[i] <= spec.window_b)
                trial.labels.classes[i] = class_id;
        AnomalyMeta meta;
        meta.class_id = class_id;
        meta.component = "gp";
        meta.mode = AnomalyMode::synthetic;
        meta.start_time = spec.window_a;
        meta.end_time = spec.window_b;
        meta.settings = {{"amplitude", spec.anomaly_amplitude},
                         {"frequency", spec.anomaly_frequency}};
        trial.anomaly = meta;
    }
    return trial;
}

Trial make_gp_trial(const KernelSpec& spec, const std::vector<double>& grid, std::uint64_t seed,
                    std::int64_t trial_id, int class_id) {
    return make_gp_trial(GpSampler(spec, grid), seed, trial_id, class_id);
}

std::vector<double> uniform_grid(std::size_t points, double lo, double hi) {
    if (points < 2) throw Error("uniform_grid: need at least 2 points");
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i)
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    return grid;
}

DatasetManifest gp_manifest(std::size_t grid_points, std::uint64_t seed) {
    DatasetManifest m;
    m.generator = Generator::gp;
    m.n_timesteps = static_cast<std::int64_t>(grid_points);
    m.dt = 1.0 / static_cast<double>(grid_points - 1);
    m.parameter_names = {"y"};
    m.class_names = {"nominal", "anomaly"};
    m.seed = seed;
    return m;
}

}  // namespace mdetect::gp
