#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "velest/vehicle.hpp"

namespace velest {

/// Native sensor rates; the pipeline resamples everything to 200 Hz.
inline constexpr double kImu1RateHz = 200.0;
inline constexpr double kImu2RateHz = 125.0;
inline constexpr double kWheelRateHz = 100.0;
inline constexpr double kTorqueRateHz = 100.0;
inline constexpr double kSteeringRateHz = 200.0;
inline constexpr double kExt1RateHz = 200.0;
inline constexpr double kExt2RateHz = 100.0;

/// Mounting positions of the two validation-only velocity sensors.
inline constexpr Vec2 kExt1Pos{-0.4, 0.0};
inline constexpr Vec2 kExt2Pos{0.3, 0.0};

struct FreezeEvent {
    std::string sensor_id;  // channel group id, e.g. "imu2"
    double t_start = 0.0;
};

struct SensorFaultPlan {
    std::array<double, 3> imu1_bias = {0, 0, 0};  // bax, bay m/s^2; bgz rad/s
    std::array<double, 3> imu2_bias = {0, 0, 0};
    double sigma_accel = 0.05;    // m/s^2
    double sigma_gyro = 0.002;    // rad/s
    double sigma_wheel = 0.1;     // rad/s
    double sigma_steer = 0.001;   // rad
    double sigma_torque = 0.5;    // N m
    double sigma_ext_vel = 0.05;  // m/s
    std::vector<FreezeEvent> freeze_events;
    double launch_slip_ratio = 0.2;
};

struct ChannelGroup {
    std::string id;
    double rate_hz = 0.0;
    std::vector<std::string> names;  // column names, time excluded
    std::vector<double> t;
    std::vector<std::vector<double>> samples;
};

struct RawSensorStream {
    std::vector<ChannelGroup> groups;

    const ChannelGroup* find(const std::string& id) const;
    const ChannelGroup& group(const std::string& id) const;  // throws if absent
};

/// Emits every channel group at its native rate from a uniformly
/// sampled trajectory (>= 200 Hz; 1 kHz makes all native grids exact).
/// Additive Gaussian noise, constant per-IMU biases, freeze events
/// repeating the value at t_start. Bit-deterministic given the seed.
RawSensorStream synthesize_sensors(const std::vector<SimFrame>& trajectory,
                                   const SensorFaultPlan& plan, uint64_t seed);

}  // namespace velest
