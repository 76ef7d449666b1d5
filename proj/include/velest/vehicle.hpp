#pragma once

#include <array>

namespace velest {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Pacejka coefficients for one axis. `d` is the peak friction
/// coefficient; the dynamics scale it by the wheel's static normal load
/// to get the peak force.
struct TireCoeffs {
    double b = 10.0;
    double c = 1.9;
    double d = 1.2;
    double e = 0.97;
};

/// Wheel order everywhere: FL, FR, RL, RR.
struct VehicleParams {
    double mass = 200.0;         // kg
    double yaw_inertia = 110.0;  // kg m^2
    std::array<Vec2, 4> wheel_pos = {
        Vec2{0.765, 0.60}, Vec2{0.765, -0.60}, Vec2{-0.765, 0.60}, Vec2{-0.765, -0.60}};
    std::array<double, 4> wheel_radius = {0.2, 0.2, 0.2, 0.2};
    double wheel_inertia = 0.3;  // kg m^2, wheel + drivetrain referred to the wheel
    TireCoeffs tire_long{12.0, 1.65, 1.30, 0.97};
    TireCoeffs tire_lat{9.0, 1.50, 1.20, 0.95};
    double torque_to_slip_gain = 0.001;  // 1/(N m); 50 N m -> SR 0.05
    double sr_max = 0.2;
    double max_steering = 0.45;  // rad
    double drag_coeff = 0.7;     // N/(m/s)^2 opposing vx

    double wheelbase() const { return wheel_pos[0].x - wheel_pos[2].x; }
    /// Throws std::invalid_argument on a violated invariant.
    void validate() const;
};

struct GroundTruthState {
    double vx = 0.0;        // m/s, body frame
    double vy = 0.0;        // m/s
    double yaw_rate = 0.0;  // rad/s
    double ax = 0.0;        // m/s^2, proper acceleration (what an ideal IMU reads)
    double ay = 0.0;        // m/s^2
    std::array<double, 4> wheel_omega = {0, 0, 0, 0};  // rad/s
    double x = 0.0;         // m, world frame
    double y = 0.0;         // m
    double heading = 0.0;   // rad
    double time = 0.0;      // s
};

struct Controls {
    double steering = 0.0;  // rad, front axle
    std::array<double, 4> wheel_torques = {0, 0, 0, 0};  // N m
};

/// One ground-truth sample with the controls that were active.
struct SimFrame {
    GroundTruthState state;
    Controls controls;
};

/// D*sin(C*atan(B*s - E*(B*s - atan(B*s)))). Odd in s.
double magic_formula(double slip, double b, double c, double d, double e);

/// Linear low-slip map SR(T) = clamp(gain*T, -sr_max, sr_max).
double slip_ratio_from_torque(double torque, double gain, double sr_max);

/// Per-wheel slip quantities of a state, exposed for scenario checks
/// and tests.
struct WheelSlip {
    double slip_ratio = 0.0;   // kappa
    double slip_angle = 0.0;   // rad
    double contact_vx = 0.0;   // wheel-frame longitudinal contact velocity
};
WheelSlip wheel_slip(const GroundTruthState& s, const VehicleParams& p, int wheel,
                     double steering);

/// Sideslip angle of the rear axle midpoint.
double rear_axle_sideslip(const GroundTruthState& s, const VehicleParams& p);

/// Planar two-track step: slip -> magic-formula forces -> body
/// accelerations -> semi-implicit Euler update of velocities and wheel
/// spin. dt must be in (0, 0.01]. Throws NonFiniteError if the result
/// diverges.
GroundTruthState step_dynamics(const GroundTruthState& state, const Controls& controls,
                               const VehicleParams& params, double dt);

}  // namespace velest
