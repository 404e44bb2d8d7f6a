#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mdetect/error.hpp"

namespace mdetect {

/// splitmix64 mix step. Used for seed derivation and trial-id hashing so
/// results do not depend on the standard library's distribution internals.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic random stream. mt19937_64 is fully specified by the
/// standard, and all distribution shaping here is explicit, so a given
/// seed yields the same values on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t next_u64() { return engine_(); }

    /// Standard normal via Box-Muller. Two uniforms are always consumed
    /// per draw, so the stream position is independent of the values drawn.
    double normal() {
        double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Normal with mean (lo+hi)/2 and sigma (hi-lo)/6, rejection-sampled
    /// so draws stay inside [lo, hi] (a 3-sigma truncation).
    double bounded_normal(double lo, double hi) {
        if (!(lo <= hi)) throw Error("bounded_normal: lo > hi");
        if (lo == hi) return lo;
        const double mean = 0.5 * (lo + hi);
        const double sigma = (hi - lo) / 6.0;
        for (;;) {
            double x = normal(mean, sigma);
            if (x >= lo && x <= hi) return x;
        }
    }

    /// Index draw from non-negative weights.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw Error("categorical: negative weight");
            total += w;
        }
        if (total <= 0.0) throw Error("categorical: all weights zero");
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

  private:
    std::mt19937_64 engine_;
};

/// Per-trial stream: base_seed + trial_id, then mixed inside Rng.
inline Rng trial_rng(std::uint64_t base_seed, std::uint64_t trial_id) {
    return Rng(base_seed + trial_id);
}

}  // namespace mdetect
