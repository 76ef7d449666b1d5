#pragma once

#include <cstdint>
#include <vector>

#include "velest/scenario.hpp"

namespace velest {

/// The default recording campaign: 18 scenarios over three grip
/// classes, ~22 simulated minutes. seed offsets every scenario's RNG.
std::vector<ScenarioSpec> default_suite(uint64_t seed);

/// Trimmed variant for quick runs (minutes -> seconds); keeps all
/// scenario kinds and surfaces.
std::vector<ScenarioSpec> smoke_suite(uint64_t seed);

}  // namespace velest
