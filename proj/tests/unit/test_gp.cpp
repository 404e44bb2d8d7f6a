#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "mdetect/error.hpp"
#include "mdetect/gp.hpp"
#include "mdetect/rng.hpp"

using namespace mdetect;
using namespace mdetect::gp;

TEST_CASE("nominal kernel values by substitution") {
    KernelSpec nom;
    CHECK(kernel_eval(nom, 0.0, 0.0) == doctest::Approx(0.3));
    CHECK(kernel_eval(nom, 1.0, 1.0) == doctest::Approx(5.7));
}

TEST_CASE("anomalous kernel adds the windowed bump") {
    KernelSpec an;
    an.kind = KernelKind::anomalous;
    an.window_a = 0.0;
    an.window_b = 1.0;
    KernelSpec nom;
    // Window peak at the midpoint, sin^2(0) = 0.
    CHECK(kernel_eval(an, 0.5, 0.5) ==
          doctest::Approx(kernel_eval(nom, 0.5, 0.5) + 0.3));
    // W vanishes exactly at the window edges.
    CHECK(kernel_eval(an, 0.0, 0.4) == doctest::Approx(kernel_eval(nom, 0.0, 0.4)));
    CHECK(kernel_eval(an, 1.0, 0.6) == doctest::Approx(kernel_eval(nom, 1.0, 0.6)));
}

TEST_CASE("kernel symmetry over random pairs, anomaly term non-negative on diagonal") {
    KernelSpec an;
    an.kind = KernelKind::anomalous;
    an.window_a = 0.25;
    an.window_b = 0.6;
    KernelSpec nom;
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const double t = rng.uniform(), u = rng.uniform();
        CHECK(kernel_eval(an, t, u) == doctest::Approx(kernel_eval(an, u, t)).epsilon(1e-14));
        CHECK(kernel_eval(an, t, t) >= kernel_eval(nom, t, t) - 1e-15);
        const double w = window_weight(0.25, 0.6, t, u);
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        if (t < 0.25 || t > 0.6) CHECK(w == 0.0);
    }
}

TEST_CASE("gram matrix: 1x1 case, exact symmetry, eigenvalue oracle") {
    KernelSpec nom;
    const auto g1 = gram_matrix(nom, {0.0});
    CHECK(g1(0, 0) == doctest::Approx(0.3 + nom.jitter));

    const auto grid = uniform_grid(50);
    const auto gram = gram_matrix(nom, grid);
    CHECK(gram == gram.transpose());

    // Eigen-decomposition oracle on the raw kernel matrix (no jitter).
    Eigen::MatrixXd raw(50, 50);
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 50; ++j)
            raw(i, j) = kernel_eval(nom, grid[static_cast<std::size_t>(i)],
                                    grid[static_cast<std::size_t>(j)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(raw);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("gram matrix requires a strictly increasing grid") {
    KernelSpec nom;
    CHECK_THROWS_AS(gram_matrix(nom, {0.0, 0.5, 0.5}), Error);
}

TEST_CASE("sampling is deterministic per seed") {
    KernelSpec nom;
    const auto grid = uniform_grid(64);
    GpSampler sampler(nom, grid);
    CHECK(sampler.sample(99) == sampler.sample(99));
    CHECK(sampler.sample(99) != sampler.sample(100));
    CHECK(sampler.jitter_used() == doctest::Approx(nom.jitter));
}

TEST_CASE("zero-amplitude anomalous kernel degenerates to nominal") {
    KernelSpec an;
    an.kind = KernelKind::anomalous;
    an.window_a = 0.2;
    an.window_b = 0.8;
    an.anomaly_amplitude = 0.0;
    KernelSpec nom;
    const auto grid = uniform_grid(40);
    CHECK(GpSampler(an, grid).sample(7) == GpSampler(nom, grid).sample(7));
}

TEST_CASE("sample variance matches the kernel diagonal (Monte Carlo)") {
    KernelSpec nom;
    const auto grid = uniform_grid(16);
    GpSampler sampler(nom, grid);
    const int n = 5000;
    const std::size_t probe = 15;  // t = 1.0, k(1,1) = 5.7
    double sum = 0, sq = 0;
    for (int s = 0; s < n; ++s) {
        const double v = sampler.sample(static_cast<std::uint64_t>(s))[probe];
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = (sq - n * mean * mean) / (n - 1);
    CHECK(var == doctest::Approx(kernel_eval(nom, 1.0, 1.0)).epsilon(0.05));
}

TEST_CASE("gp trials label exactly the grid points inside the window") {
    KernelSpec an;
    an.kind = KernelKind::anomalous;
    an.window_a = 0.3;
    an.window_b = 0.7;
    const auto grid = uniform_grid(1000);
    const Trial trial = make_gp_trial(an, grid, 5, 17);
    CHECK(trial.trial_id == 17);
    REQUIRE(trial.anomaly.has_value());
    CHECK(trial.anomaly->mode == AnomalyMode::synthetic);
    CHECK(trial.anomaly->start_time == 0.3);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const bool inside = grid[i] >= 0.3 && grid[i] <= 0.7;
        CHECK(trial.labels.classes[i] == (inside ? 1 : 0));
    }

    KernelSpec nom;
    const Trial nominal = make_gp_trial(nom, grid, 5, 0);
    CHECK_FALSE(nominal.anomaly.has_value());
    for (int c : nominal.labels.classes) CHECK(c == 0);
}

TEST_CASE("anomaly window outside the grid span is rejected") {
    KernelSpec an;
    an.kind = KernelKind::anomalous;
    an.window_a = 0.5;
    an.window_b = 1.5;
    CHECK_THROWS_WITH_AS(make_gp_trial(an, uniform_grid(100), 1, 0),
                         doctest::Contains("window outside"), Error);
}

TEST_CASE("kernel spec invariants") {
    KernelSpec bad;
    bad.kind = KernelKind::anomalous;
    bad.window_a = 0.7;
    bad.window_b = 0.3;
    CHECK_THROWS_AS(bad.validate(), Error);
    KernelSpec neg;
    neg.anomaly_amplitude = -0.1;
    CHECK_THROWS_AS(neg.validate(), Error);
    KernelSpec zero_jitter;
    zero_jitter.jitter = 0.0;
    CHECK_THROWS_AS(zero_jitter.validate(), Error);
}
