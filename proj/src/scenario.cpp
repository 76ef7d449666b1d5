#include "velest/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "velest/common.hpp"

namespace velest {

namespace {
constexpr double kDtInternal = 0.001;
constexpr double kPrefix = 3.0;  // standstill lead-in, also the calibration window
constexpr double kDeg = M_PI / 180.0;
}  // namespace

std::string scenario_name(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::standstill: return "standstill";
        case ScenarioKind::launch: return "launch";
        case ScenarioKind::slalom: return "slalom";
        case ScenarioKind::high_slip_corner: return "high_slip_corner";
        case ScenarioKind::track_lap: return "track_lap";
        case ScenarioKind::imu_freeze_lap: return "imu_freeze_lap";
    }
    throw std::invalid_argument("bad scenario kind");
}

ScenarioKind scenario_from_name(const std::string& name) {
    for (ScenarioKind k :
         {ScenarioKind::standstill, ScenarioKind::launch, ScenarioKind::slalom,
          ScenarioKind::high_slip_corner, ScenarioKind::track_lap,
          ScenarioKind::imu_freeze_lap})
        if (scenario_name(k) == name) return k;
    throw std::invalid_argument("unknown scenario: " + name);
}

double surface_grip(const std::string& surface) {
    if (surface == "flat") return 1.0;
    if (surface == "gravel") return 0.6;
    if (surface == "wet") return 0.45;
    throw std::invalid_argument("unknown surface: " + surface);
}

namespace {

double surface_noise(const std::string& surface) {
    if (surface == "flat") return 1.0;
    if (surface == "gravel") return 1.6;
    return 1.25;  // wet
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// total drive/brake torque for a speed target, split 40/60 front/rear,
// with a per-wheel traction clamp: torque backs off once the wheel's
// slip ratio passes 0.12 and never exceeds the peak-force torque
void apply_drive(Controls& u, double v_target, const GroundTruthState& s,
                 const VehicleParams& p) {
    double total = clamp(400.0 * (v_target - s.vx), -500.0, 800.0);
    const double fz = p.mass * 9.81 / 4.0;
    for (int w = 0; w < 4; ++w) {
        double want = (w < 2 ? 0.2 : 0.3) * total;
        double sr = wheel_slip(s, p, w, u.steering).slip_ratio;
        double backoff = clamp(1.0 - 5.0 * (std::abs(sr) - 0.12), 0.0, 1.0);
        double cap = 1.2 * p.wheel_radius[static_cast<std::size_t>(w)] *
                     p.tire_long.d * fz;
        u.wheel_torques[static_cast<std::size_t>(w)] =
            clamp(want * backoff, -cap, cap);
    }
}

// stadium track: two straights joined by half circles, anticlockwise
struct Stadium {
    double straight;
    double radius;

    double lap_length() const { return 2.0 * straight + 2.0 * M_PI * radius; }

    double curvature(double s) const {
        s = std::fmod(s, lap_length());
        if (s < 0) s += lap_length();
        if (s < straight) return 0.0;
        if (s < straight + M_PI * radius) return 1.0 / radius;
        if (s < 2.0 * straight + M_PI * radius) return 0.0;
        return 1.0 / radius;
    }

    void point(double s, double& px, double& py) const {
        s = std::fmod(s, lap_length());
        if (s < 0) s += lap_length();
        if (s < straight) {
            px = s;
            py = 0.0;
            return;
        }
        s -= straight;
        if (s < M_PI * radius) {
            double a = s / radius;  // 0..pi around (straight, radius)
            px = straight + radius * std::sin(a);
            py = radius - radius * std::cos(a);
            return;
        }
        s -= M_PI * radius;
        if (s < straight) {
            px = straight - s;
            py = 2.0 * radius;
            return;
        }
        s -= straight;
        double a = s / radius;
        px = -radius * std::sin(a);
        py = radius + radius * std::cos(a);
    }
};

struct PursuitDriver {
    Stadium track;
    double v_straight;
    double a_lat_budget;  // m/s^2 usable for cornering
    double wheelbase;
    double max_steer;
    const VehicleParams* params = nullptr;
    double cursor = 0.0;

    double allowed_speed(double curv) const {
        if (curv < 1e-6) return v_straight;
        return std::min(v_straight, std::sqrt(a_lat_budget / curv));
    }

    Controls drive(const GroundTruthState& s) {
        // advance the progress cursor greedily toward the closest point
        auto dist2 = [&](double sc) {
            double px, py;
            track.point(sc, px, py);
            return (px - s.x) * (px - s.x) + (py - s.y) * (py - s.y);
        };
        double best = dist2(cursor);
        for (int i = 0; i < 40; ++i) {
            double cand = cursor + 0.25;
            double d = dist2(cand);
            if (d >= best) break;
            best = d;
            cursor = cand;
        }

        double lookahead = std::max(4.0, 0.6 * s.vx);
        double tx, ty;
        track.point(cursor + lookahead, tx, ty);
        double dx = tx - s.x, dy = ty - s.y;
        double lx = std::cos(s.heading) * dx + std::sin(s.heading) * dy;
        double ly = -std::sin(s.heading) * dx + std::cos(s.heading) * dy;
        double ld = std::max(1.0, std::hypot(lx, ly));
        double steer = std::atan(2.0 * wheelbase * (ly / ld) / ld);

        // slow down for the tightest curvature within braking distance
        double v_target = v_straight;
        for (double ahead = 0.0; ahead <= 30.0; ahead += 2.5)
            v_target = std::min(v_target, allowed_speed(track.curvature(cursor + ahead)));

        Controls u;
        u.steering = clamp(steer, -max_steer, max_steer);
        apply_drive(u, v_target, s, *params);
        return u;
    }

    double cross_track(const GroundTruthState& s) const {
        double px, py;
        track.point(cursor, px, py);
        return std::hypot(px - s.x, py - s.y);
    }
};

struct LaunchDriver {
    double slip_target;
    double torque_ff;     // N m, near the peak-force torque per rear wheel
    double v_exit;
    const VehicleParams* params;
    bool done = false;

    Controls drive(double t, const GroundTruthState& s) {
        Controls u;
        if (t < kPrefix) return u;
        if (s.vx >= v_exit) done = true;
        if (done) {
            apply_drive(u, v_exit, s, *params);
            return u;
        }
        for (int w = 2; w < 4; ++w) {
            double sr = wheel_slip(s, *params, w, 0.0).slip_ratio;
            u.wheel_torques[w] = clamp(torque_ff + 400.0 * (slip_target - sr), 0.0, 420.0);
        }
        return u;
    }
};

struct SlalomDriver {
    double v_target;
    double amplitude;
    double freq_hz;
    const VehicleParams* params = nullptr;

    Controls drive(double t, const GroundTruthState& s) const {
        Controls u;
        if (t < kPrefix) return u;
        double t_rel = t - kPrefix;
        if (t_rel > 4.0) u.steering = amplitude * std::sin(2.0 * M_PI * freq_hz * (t_rel - 4.0));
        apply_drive(u, v_target, s, *params);
        return u;
    }
};

// power-over drift: turn in, then spin the rear axle to a high slip
// target so the friction ellipse sheds its lateral grip
struct CornerDriver {
    double v_entry;
    double steer_peak;
    double hold_s;
    const VehicleParams* params = nullptr;
    double t_snap = -1.0;

    Controls drive(double t, const GroundTruthState& s) {
        Controls u;
        if (t < kPrefix) return u;
        // the speed loop settles a hair under its target, so arm early
        if (t_snap < 0.0 && s.vx >= 0.97 * v_entry) t_snap = t;
        if (t_snap < 0.0) {
            apply_drive(u, v_entry, s, *params);
            return u;
        }
        double rel = t - t_snap;
        if (rel < 0.3)
            u.steering = steer_peak * rel / 0.3;
        else if (rel < 0.3 + hold_s)
            u.steering = steer_peak;
        else if (rel < 1.3 + hold_s)
            u.steering = steer_peak * (1.0 - (rel - 0.3 - hold_s));
        if (rel < 0.3 + hold_s) {
            for (int w = 2; w < 4; ++w) {
                double sr = wheel_slip(s, *params, w, u.steering).slip_ratio;
                u.wheel_torques[static_cast<std::size_t>(w)] =
                    clamp(250.0 + 600.0 * (0.5 - sr), 0.0, 450.0);
            }
        } else {
            apply_drive(u, 0.7 * v_entry, s, *params);
        }
        return u;
    }
};

SensorFaultPlan draw_plan(uint64_t seed, double noise_scale) {
    SensorFaultPlan plan;
    std::mt19937_64 rng(mix_seed(seed, 21));
    std::uniform_real_distribution<double> ua(-0.3, 0.3);
    std::uniform_real_distribution<double> ug(-0.01, 0.01);
    plan.imu1_bias = {ua(rng), ua(rng), ug(rng)};
    plan.imu2_bias = {ua(rng), ua(rng), ug(rng)};
    plan.sigma_accel *= noise_scale;
    plan.sigma_gyro *= noise_scale;
    plan.sigma_wheel *= noise_scale;
    return plan;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec, const VehicleParams& base) {
    if (spec.duration < kPrefix + 1.0)
        throw std::invalid_argument("scenario too short for the standstill prefix");
    VehicleParams params = base;
    const double grip = surface_grip(spec.surface);
    params.tire_long.d *= grip;
    params.tire_lat.d *= grip;
    params.validate();

    SensorFaultPlan plan = spec.plan_override
                               ? *spec.plan_override
                               : draw_plan(spec.seed, surface_noise(spec.surface));
    if (spec.kind == ScenarioKind::imu_freeze_lap && spec.plan_override == std::nullopt)
        plan.freeze_events.push_back({"imu2", 0.6 * spec.duration});

    std::mt19937_64 var(mix_seed(spec.seed, 22));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double sg = std::sqrt(grip);

    PursuitDriver pursuit{
        Stadium{55.0 + 10.0 * u01(var), 11.0 + 2.0 * u01(var)},
        (12.5 + 2.0 * u01(var)) * sg,
        0.62 * params.tire_lat.d * 9.81,
        params.wheelbase(),
        params.max_steering,
        &params,
    };
    LaunchDriver launch{plan.launch_slip_ratio,
                        0.95 * params.wheel_radius[2] * params.tire_long.d * params.mass *
                            9.81 / 4.0,
                        11.0 * sg, &params};
    SlalomDriver slalom{(8.5 + 2.0 * u01(var)) * sg, 0.10 + 0.05 * u01(var),
                        0.32 + 0.10 * u01(var), &params};
    CornerDriver corner{12.5 * sg, 0.30, 2.0, &params};

    std::function<Controls(double, const GroundTruthState&)> control;
    switch (spec.kind) {
        case ScenarioKind::standstill:
            control = [](double, const GroundTruthState&) { return Controls{}; };
            break;
        case ScenarioKind::launch:
            control = [&](double t, const GroundTruthState& s) { return launch.drive(t, s); };
            break;
        case ScenarioKind::slalom:
            control = [&](double t, const GroundTruthState& s) { return slalom.drive(t, s); };
            break;
        case ScenarioKind::high_slip_corner:
            control = [&](double t, const GroundTruthState& s) { return corner.drive(t, s); };
            break;
        case ScenarioKind::track_lap:
        case ScenarioKind::imu_freeze_lap:
            control = [&](double t, const GroundTruthState& s) {
                if (t < kPrefix) return Controls{};
                return pursuit.drive(s);
            };
            break;
    }

    const auto steps = static_cast<std::size_t>(std::llround(spec.duration / kDtInternal));
    std::vector<SimFrame> internal;
    internal.reserve(steps);
    GroundTruthState state;
    double max_sr = 0.0, max_beta = 0.0, max_ct = 0.0;
    bool on_track = spec.kind == ScenarioKind::track_lap ||
                    spec.kind == ScenarioKind::imu_freeze_lap;

    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * kDtInternal;
        Controls u = control(t, state);
        internal.push_back({state, u});
        GroundTruthState next = step_dynamics(state, u, params, kDtInternal);
        // accelerations evaluated at (state, u) belong to this frame
        internal.back().state.ax = next.ax;
        internal.back().state.ay = next.ay;
        internal.back().state.time = t;
        next.time = t + kDtInternal;

        if (t >= kPrefix) {
            for (int w = 0; w < 4; ++w)
                max_sr = std::max(max_sr,
                                  std::abs(wheel_slip(state, params, w, u.steering).slip_ratio));
            max_beta = std::max(max_beta, std::abs(rear_axle_sideslip(state, params)));
            if (on_track) max_ct = std::max(max_ct, pursuit.cross_track(state));
        }
        state = next;
    }

    switch (spec.kind) {
        case ScenarioKind::launch:
            if (max_sr < 0.75 * plan.launch_slip_ratio)
                throw ScenarioUnreachableError("launch slip never reached " +
                                               std::to_string(0.75 * plan.launch_slip_ratio));
            break;
        case ScenarioKind::high_slip_corner:
            if (max_beta < 8.0 * kDeg)
                throw ScenarioUnreachableError("rear sideslip stayed under 8 deg");
            break;
        case ScenarioKind::track_lap:
        case ScenarioKind::imu_freeze_lap:
            if (max_ct > 6.0 || pursuit.cursor < pursuit.track.lap_length())
                throw ScenarioUnreachableError("lap not completed cleanly");
            break;
        default:
            break;
    }

    ScenarioResult out;
    out.plan = plan;
    out.max_abs_slip_ratio = max_sr;
    out.max_rear_sideslip = max_beta;
    out.trajectory.reserve(internal.size() / 5 + 1);
    for (std::size_t k = 0; k < internal.size(); k += 5) out.trajectory.push_back(internal[k]);
    out.stream = synthesize_sensors(internal, plan, mix_seed(spec.seed, 7));

    KeyValueConfig& m = out.manifest;
    m.set("scenario", scenario_name(spec.kind));
    m.set("surface", spec.surface);
    m.set("seed", static_cast<long>(spec.seed));
    m.set("duration", spec.duration);
    m.set("grip", grip);
    m.set("standstill_prefix", kPrefix);
    m.set("imu1_bias_ax", plan.imu1_bias[0]);
    m.set("imu1_bias_ay", plan.imu1_bias[1]);
    m.set("imu1_bias_gz", plan.imu1_bias[2]);
    m.set("imu2_bias_ax", plan.imu2_bias[0]);
    m.set("imu2_bias_ay", plan.imu2_bias[1]);
    m.set("imu2_bias_gz", plan.imu2_bias[2]);
    m.set("sigma_accel", plan.sigma_accel);
    m.set("sigma_gyro", plan.sigma_gyro);
    m.set("sigma_wheel", plan.sigma_wheel);
    m.set("max_abs_slip_ratio", max_sr);
    m.set("max_rear_sideslip", max_beta);
    for (std::size_t i = 0; i < plan.freeze_events.size(); ++i) {
        m.set("freeze" + std::to_string(i) + "_sensor", plan.freeze_events[i].sensor_id);
        m.set("freeze" + std::to_string(i) + "_t", plan.freeze_events[i].t_start);
    }
    return out;
}

}  // namespace velest
