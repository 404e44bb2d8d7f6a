#pragma once

#include <stdexcept>
#include <string>

namespace mdetect {

/// Base error for all library failures. Messages carry enough context
/// (paths, trial ids, volume names, times) to act on without a debugger.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when the physics integrator produces an invalid state.
class SimulationFault : public Error {
  public:
    SimulationFault(const std::string& what, std::string volume, double time)
        : Error(what), volume_(std::move(volume)), time_(time) {}

    const std::string& volume() const { return volume_; }
    double time() const { return time_; }

  private:
    std::string volume_;
    double time_;
};

}  // namespace mdetect
