#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "velest/frame.hpp"
#include "velest/types.hpp"
#include "velest/vehicle.hpp"

namespace velest {

using Vector5d = Eigen::Matrix<double, 5, 1>;
using Matrix5d = Eigen::Matrix<double, 5, 5>;

enum class FilterMode { baseline, reference };

/// 99% chi-square gates per measurement dimension.
inline constexpr double kChi2Gate1d = 6.6349;
inline constexpr double kChi2Gate2d = 9.21034;
inline constexpr double kChi2Gate3d = 11.3449;

struct NoiseConfig {
    // process noise spectral densities
    double q_v = 0.5;     // (m/s)^2 / s on vx, vy
    double q_r = 50.0;    // (rad/s)^2 / s on yaw rate
    double q_a = 400.0;   // (m/s^2)^2 / s on ax, ay
    // measurement variances
    double r_accel = 0.0025;     // (m/s^2)^2
    double r_gyro = 4.0e-6;      // (rad/s)^2
    double r_wheel_vx = 0.0025;  // (m/s)^2
    double r_wheel_vy = 0.01;    // (m/s)^2
    double r_ext_vel = 0.0025;   // (m/s)^2
    // unscented transform parameters
    double ukf_alpha = 0.1;
    double ukf_beta = 2.0;
    double ukf_kappa = 0.0;
    double stale_timeout = 0.1;  // s of identical values before a channel is dropped
};

/// state layout: [vx, vy, yaw_rate, ax, ay]
struct FilterState {
    Vector5d mean = Vector5d::Zero();
    Matrix5d cov = Matrix5d::Identity();
    std::array<std::array<double, 3>, 2> imu_bias{};  // per IMU: ax, ay, gz
    double time = 0.0;

    StateEstimate estimate() const { return StateEstimate::from_vector(mean); }
};

enum class UpdateStatus { applied, gate_rejected };

struct UpdateResult {
    FilterState state;
    UpdateStatus status = UpdateStatus::applied;
    double mahalanobis_sq = 0.0;
};

/// Wheel-level inputs for the velocity observation.
struct WheelObservation {
    std::array<double, 4> omega{};   // rad/s, fl fr rl rr
    std::array<double, 4> torque{};  // N m per wheel
    double steering = 0.0;           // rad, front wheels
    std::array<Vec2, 4> wheel_pos;
    std::array<double, 4> radius = {0.2, 0.2, 0.2, 0.2};
    double sr_gain = 0.001;
    double sr_max = 0.2;
};

FilterState ekf_propagate(const FilterState& in, double dt, const NoiseConfig& noise);

/// Joint [ax, ay, gz] update with bias subtraction; imu_id is 0 or 1.
UpdateResult lkf_update_imu(const FilterState& in, int imu_id, double ax_raw,
                            double ay_raw, double gz_raw, const NoiseConfig& noise);

/// Hub velocity of one wheel in the vehicle frame from its spin rate,
/// steering angle and the torque-based slip-ratio correction.
Eigen::Vector2d wheel_velocity(const WheelObservation& obs, int wheel);

/// Index of the wheel with the smallest |slip ratio|; ties pick the
/// lowest index.
int select_min_slip_wheel(const WheelObservation& obs);

UpdateResult ukf_update_velocity(const FilterState& in, const WheelObservation& obs,
                                 const NoiseConfig& noise);

UpdateResult ukf_update_external_velocity(const FilterState& in,
                                          const Eigen::Vector2d& v_meas,
                                          const Vec2& sensor_pos, double variance,
                                          const NoiseConfig& noise);

/// Mean IMU readings over the initial standstill window (>= 1 s).
std::array<std::array<double, 3>, 2> calibrate_standstill(
    const std::vector<SensorFrame>& frames, double window_s);

struct MkfConfig {
    FilterMode mode = FilterMode::baseline;
    NoiseConfig noise;
    VehicleParams vehicle;
    double dt = 0.005;
    double calib_window = 2.0;
    Vec2 ext_sensor_pos{-0.4, 0.0};
    Vector5d initial_variance = (Vector5d() << 1.0, 1.0, 0.5, 4.0, 4.0).finished();

    static MkfConfig load(const std::string& path);
    void save(const std::string& path) const;
};

/// Full filter pass over a synchronized stream. Output is aligned with
/// the input frames one-to-one.
std::vector<FilterState> run_filter(const std::vector<SensorFrame>& frames,
                                    FilterMode mode, const MkfConfig& cfg);

}  // namespace velest
