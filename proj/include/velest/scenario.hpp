#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "velest/config.hpp"
#include "velest/sensors.hpp"
#include "velest/vehicle.hpp"

namespace velest {

enum class ScenarioKind {
    standstill,
    launch,
    slalom,
    high_slip_corner,
    track_lap,
    imu_freeze_lap,
};

std::string scenario_name(ScenarioKind kind);
ScenarioKind scenario_from_name(const std::string& name);

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::track_lap;
    double duration = 60.0;  // s, includes the 3 s standstill prefix
    uint64_t seed = 1;
    std::string surface = "flat";  // flat | gravel | wet
    std::optional<SensorFaultPlan> plan_override;
};

/// Grip multiplier applied to both tire peak coefficients.
double surface_grip(const std::string& surface);

struct ScenarioResult {
    std::vector<SimFrame> trajectory;  // 200 Hz ground truth + controls
    RawSensorStream stream;            // native-rate sensor channels
    SensorFaultPlan plan;
    KeyValueConfig manifest;
    double max_abs_slip_ratio = 0.0;   // over all wheels
    double max_rear_sideslip = 0.0;    // rad, absolute
};

/// Closed-loop simulation of one scenario at 1 kHz internally.
/// Throws ScenarioUnreachableError when the scenario's defining
/// condition is not met (launch slip, corner sideslip).
ScenarioResult run_scenario(const ScenarioSpec& spec, const VehicleParams& base);

}  // namespace velest
