#include "velest/vehicle.hpp"

#include <cmath>
#include <stdexcept>

#include "velest/common.hpp"

namespace velest {

namespace {
constexpr double kGravity = 9.81;
// Contact velocities below this are treated as this magnitude when
// normalizing slip, so slip quantities stay bounded through standstill.
constexpr double kSlipSpeedGuard = 0.5;
}  // namespace

void VehicleParams::validate() const {
    if (!(mass > 0.0)) throw std::invalid_argument("mass must be > 0");
    if (!(yaw_inertia > 0.0)) throw std::invalid_argument("yaw_inertia must be > 0");
    if (!(wheel_inertia > 0.0)) throw std::invalid_argument("wheel_inertia must be > 0");
    for (int i = 0; i < 4; ++i) {
        if (!(wheel_radius[i] > 0.0)) throw std::invalid_argument("wheel_radius must be > 0");
        const bool front = i < 2;
        if (front && !(wheel_pos[i].x > 0.0))
            throw std::invalid_argument("front wheels must have px > 0");
        if (!front && !(wheel_pos[i].x < 0.0))
            throw std::invalid_argument("rear wheels must have px < 0");
    }
    if (!(tire_long.d > 0.0) || !(tire_lat.d > 0.0))
        throw std::invalid_argument("tire D must be > 0");
}

double magic_formula(double slip, double b, double c, double d, double e) {
    const double bs = b * slip;
    return d * std::sin(c * std::atan(bs - e * (bs - std::atan(bs))));
}

double slip_ratio_from_torque(double torque, double gain, double sr_max) {
    const double sr = gain * torque;
    if (sr > sr_max) return sr_max;
    if (sr < -sr_max) return -sr_max;
    return sr;
}

WheelSlip wheel_slip(const GroundTruthState& s, const VehicleParams& p, int wheel,
                     double steering) {
    const double delta = wheel < 2 ? steering : 0.0;
    const Vec2 pos = p.wheel_pos[wheel];
    const double ux = s.vx - s.yaw_rate * pos.y;
    const double uy = s.vy + s.yaw_rate * pos.x;
    const double cd = std::cos(delta), sd = std::sin(delta);
    const double ul = cd * ux + sd * uy;
    const double ut = -sd * ux + cd * uy;
    const double den = std::max(std::abs(ul), kSlipSpeedGuard);
    WheelSlip w;
    w.contact_vx = ul;
    w.slip_ratio = (s.wheel_omega[wheel] * p.wheel_radius[wheel] - ul) / den;
    w.slip_angle = std::atan2(ut, den);
    return w;
}

double rear_axle_sideslip(const GroundTruthState& s, const VehicleParams& p) {
    const double px = 0.5 * (p.wheel_pos[2].x + p.wheel_pos[3].x);
    const double ut = s.vy + s.yaw_rate * px;
    return std::atan2(ut, std::max(std::abs(s.vx), kSlipSpeedGuard));
}

GroundTruthState step_dynamics(const GroundTruthState& state, const Controls& controls,
                               const VehicleParams& params, double dt) {
    if (!(dt > 0.0) || dt > 0.01) throw std::invalid_argument("dt must be in (0, 0.01]");

    const double fz = params.mass * kGravity / 4.0;
    double force_x = 0.0, force_y = 0.0, moment_z = 0.0;
    std::array<double, 4> wheel_drive_force{};

    for (int i = 0; i < 4; ++i) {
        const double delta = i < 2 ? controls.steering : 0.0;
        const WheelSlip slip = wheel_slip(state, params, i, controls.steering);
        const double f_long = magic_formula(slip.slip_ratio, params.tire_long.b,
                                            params.tire_long.c, params.tire_long.d * fz,
                                            params.tire_long.e);
        double f_lat = -magic_formula(slip.slip_angle, params.tire_lat.b,
                                      params.tire_lat.c, params.tire_lat.d * fz,
                                      params.tire_lat.e);
        // friction ellipse: longitudinal force consumption sheds lateral
        // grip, which is what lets a spinning axle break loose
        const double usage = std::min(1.0, std::abs(f_long) / (params.tire_long.d * fz));
        f_lat *= std::sqrt(1.0 - usage * usage);
        wheel_drive_force[i] = f_long;
        const double cd = std::cos(delta), sd = std::sin(delta);
        const double fx = cd * f_long - sd * f_lat;
        const double fy = sd * f_long + cd * f_lat;
        force_x += fx;
        force_y += fy;
        moment_z += params.wheel_pos[i].x * fy - params.wheel_pos[i].y * fx;
    }
    force_x -= params.drag_coeff * state.vx * std::abs(state.vx);

    GroundTruthState next = state;
    next.ax = force_x / params.mass;
    next.ay = force_y / params.mass;
    const double yaw_acc = moment_z / params.yaw_inertia;

    next.vx = state.vx + dt * (next.ax + state.yaw_rate * state.vy);
    next.vy = state.vy + dt * (next.ay - state.yaw_rate * state.vx);
    next.yaw_rate = state.yaw_rate + dt * yaw_acc;
    for (int i = 0; i < 4; ++i) {
        const double omega_dot =
            (controls.wheel_torques[i] - params.wheel_radius[i] * wheel_drive_force[i]) /
            params.wheel_inertia;
        next.wheel_omega[i] = state.wheel_omega[i] + dt * omega_dot;
    }
    next.heading = state.heading + dt * next.yaw_rate;
    const double ch = std::cos(next.heading), sh = std::sin(next.heading);
    next.x = state.x + dt * (ch * next.vx - sh * next.vy);
    next.y = state.y + dt * (sh * next.vx + ch * next.vy);
    next.time = state.time + dt;

    const bool finite = std::isfinite(next.vx) && std::isfinite(next.vy) &&
                        std::isfinite(next.yaw_rate) && std::isfinite(next.wheel_omega[0]) &&
                        std::isfinite(next.wheel_omega[1]) && std::isfinite(next.wheel_omega[2]) &&
                        std::isfinite(next.wheel_omega[3]) && std::isfinite(next.x) &&
                        std::isfinite(next.y);
    if (!finite) throw NonFiniteError("vehicle integration diverged");
    return next;
}

}  // namespace velest
