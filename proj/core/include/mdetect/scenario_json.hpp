#pragma once

#include <string>

#include "mdetect/sim.hpp"

namespace mdetect::sim {

/// JSON round trip for scenario + Monte Carlo configuration, used by the
/// pipeline config file and by config hashing. Serialization is canonical:
/// object keys are ordered, numbers round-trip exactly.
std::string monte_carlo_to_json_string(const MonteCarloConfig& config, int indent = 2);
MonteCarloConfig monte_carlo_from_json_string(const std::string& text);

}  // namespace mdetect::sim
