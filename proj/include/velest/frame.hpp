#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "velest/vehicle.hpp"

namespace velest {

/// One row of the synchronized 200 Hz stream.
struct SensorFrame {
    double t = 0.0;
    double imu1_ax = 0.0, imu1_ay = 0.0, imu1_gz = 0.0;
    double imu2_ax = 0.0, imu2_ay = 0.0, imu2_gz = 0.0;
    std::array<double, 4> wheel_omega{};  // fl fr rl rr
    double tq_f = 0.0, tq_r = 0.0;        // axle torque sums
    double steering = 0.0;
    bool has_ext = false;
    double ext_vx = 0.0, ext_vy = 0.0;

    /// The 13 network input channels, fixed order.
    Eigen::VectorXd network_inputs() const;
};

inline constexpr int kNetworkInputDim = 13;
inline constexpr int kNetworkOutputDim = 5;

/// Target row: the state the estimator is trained to reproduce.
struct TargetFrame {
    double t = 0.0;
    double vx = 0.0, vy = 0.0, yaw_rate = 0.0, ax = 0.0, ay = 0.0;
};

/// One recorded scenario after synchronization.
struct Dataset {
    std::string name;
    std::string surface;
    uint64_t seed = 0;
    std::vector<SensorFrame> frames;
    std::vector<TargetFrame> targets;               // empty until prepared
    std::vector<GroundTruthState> ground_truth;     // aligned with frames
    double duration() const {
        return frames.empty() ? 0.0 : frames.back().t - frames.front().t;
    }
};

}  // namespace velest
