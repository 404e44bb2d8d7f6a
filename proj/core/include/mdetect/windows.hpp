#pragma once

#include <cstdint>
#include <vector>

namespace mdetect {

/// A family of fixed-length time windows. `length` is the window span in
/// timesteps, evaluated at starts {0, stride, 2*stride, ...} plus a final
/// start clamped to n - length so every timestep is covered. `subsample`
/// optionally thins the points inside a window (a window of span 100 with
/// subsample 5 becomes a 20-dimensional vector); 1 uses every point.
struct WindowFamily {
    std::int64_t length = 1;
    std::int64_t stride = 1;
    std::int64_t subsample = 1;

    /// Number of points in the window vector.
    std::int64_t dim() const { return (length - 1) / subsample + 1; }

    void validate(std::int64_t n_timesteps) const;

    /// Window start positions including the clamped final window.
    std::vector<std::int64_t> start_positions(std::int64_t n_timesteps) const;

    bool operator==(const WindowFamily&) const = default;
};

/// Default detector families: point windows, short 20-step windows, and
/// 100-step windows evaluated on a stride of 5.
std::vector<WindowFamily> default_window_families();

}  // namespace mdetect
