#include "velest/sensors.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <random>
#include <stdexcept>

#include "velest/common.hpp"

namespace velest {

const ChannelGroup* RawSensorStream::find(const std::string& id) const {
    for (const auto& g : groups)
        if (g.id == id) return &g;
    return nullptr;
}

const ChannelGroup& RawSensorStream::group(const std::string& id) const {
    const ChannelGroup* g = find(id);
    if (!g) throw std::runtime_error("no such channel group: " + id);
    return *g;
}

namespace {

// velocity of a body-fixed point in the vehicle frame
Eigen::Vector2d point_velocity(const GroundTruthState& s, const Vec2& p) {
    return {s.vx - s.yaw_rate * p.y, s.vy + s.yaw_rate * p.x};
}

struct Sampler {
    const std::vector<SimFrame>& traj;
    double dt;
    double t0;

    // index of the trajectory sample at or just before t
    std::size_t at(double t) const {
        auto k = static_cast<std::size_t>(std::floor((t - t0) / dt + 1e-9));
        return k < traj.size() ? k : traj.size() - 1;
    }
};

ChannelGroup make_group(const std::string& id, double rate,
                        std::vector<std::string> names, double duration, double t0) {
    ChannelGroup g;
    g.id = id;
    g.rate_hz = rate;
    g.names = std::move(names);
    auto n = static_cast<std::size_t>(std::floor(duration * rate + 1e-9)) + 1;
    g.t.reserve(n);
    g.samples.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
        g.t.push_back(t0 + static_cast<double>(k) / rate);
    return g;
}

void apply_freeze(ChannelGroup& g, double t_start) {
    if (g.samples.empty()) return;
    std::size_t hold = 0;
    for (std::size_t i = 0; i < g.t.size(); ++i)
        if (g.t[i] <= t_start + 1e-9) hold = i;
    for (std::size_t i = hold + 1; i < g.samples.size(); ++i)
        g.samples[i] = g.samples[hold];
}

}  // namespace

RawSensorStream synthesize_sensors(const std::vector<SimFrame>& trajectory,
                                   const SensorFaultPlan& plan, uint64_t seed) {
    if (trajectory.size() < 2)
        throw std::invalid_argument("trajectory needs at least two samples");
    const double dt = trajectory[1].state.time - trajectory[0].state.time;
    if (dt <= 0.0 || dt > 0.005 + 1e-12)
        throw std::invalid_argument("trajectory must be sampled at >= 200 Hz");
    const double t0 = trajectory.front().state.time;
    const double duration = trajectory.back().state.time - t0;
    Sampler smp{trajectory, dt, t0};

    RawSensorStream out;

    auto imu = [&](const std::string& id, double rate,
                   const std::array<double, 3>& bias, uint64_t stream) {
        ChannelGroup g = make_group(id, rate, {"ax", "ay", "gz"}, duration, t0);
        std::mt19937_64 rng(mix_seed(seed, stream));
        std::normal_distribution<double> na(0.0, plan.sigma_accel);
        std::normal_distribution<double> ng(0.0, plan.sigma_gyro);
        for (double t : g.t) {
            const GroundTruthState& s = smp.traj[smp.at(t)].state;
            g.samples.push_back({s.ax + bias[0] + na(rng), s.ay + bias[1] + na(rng),
                                 s.yaw_rate + bias[2] + ng(rng)});
        }
        out.groups.push_back(std::move(g));
    };
    imu("imu1", kImu1RateHz, plan.imu1_bias, 1);
    imu("imu2", kImu2RateHz, plan.imu2_bias, 2);

    {
        ChannelGroup g = make_group("wheels", kWheelRateHz,
                                    {"w_fl", "w_fr", "w_rl", "w_rr"}, duration, t0);
        std::mt19937_64 rng(mix_seed(seed, 3));
        std::normal_distribution<double> nw(0.0, plan.sigma_wheel);
        for (double t : g.t) {
            const GroundTruthState& s = smp.traj[smp.at(t)].state;
            std::vector<double> row(4);
            for (int w = 0; w < 4; ++w) row[w] = s.wheel_omega[w] + nw(rng);
            g.samples.push_back(std::move(row));
        }
        out.groups.push_back(std::move(g));
    }
    {
        ChannelGroup g = make_group("torques", kTorqueRateHz,
                                    {"tq_fl", "tq_fr", "tq_rl", "tq_rr"}, duration, t0);
        std::mt19937_64 rng(mix_seed(seed, 4));
        std::normal_distribution<double> nt(0.0, plan.sigma_torque);
        for (double t : g.t) {
            const Controls& u = smp.traj[smp.at(t)].controls;
            std::vector<double> row(4);
            for (int w = 0; w < 4; ++w) row[w] = u.wheel_torques[w] + nt(rng);
            g.samples.push_back(std::move(row));
        }
        out.groups.push_back(std::move(g));
    }
    {
        ChannelGroup g = make_group("steering", kSteeringRateHz, {"steer"}, duration, t0);
        std::mt19937_64 rng(mix_seed(seed, 5));
        std::normal_distribution<double> ns(0.0, plan.sigma_steer);
        for (double t : g.t)
            g.samples.push_back({smp.traj[smp.at(t)].controls.steering + ns(rng)});
        out.groups.push_back(std::move(g));
    }

    auto ext = [&](const std::string& id, double rate, const Vec2& pos,
                   uint64_t stream) {
        ChannelGroup g = make_group(id, rate, {"vx", "vy"}, duration, t0);
        std::mt19937_64 rng(mix_seed(seed, stream));
        std::normal_distribution<double> nv(0.0, plan.sigma_ext_vel);
        for (double t : g.t) {
            Eigen::Vector2d v = point_velocity(smp.traj[smp.at(t)].state, pos);
            g.samples.push_back({v.x() + nv(rng), v.y() + nv(rng)});
        }
        out.groups.push_back(std::move(g));
    };
    ext("ext1", kExt1RateHz, kExt1Pos, 6);
    ext("ext2", kExt2RateHz, kExt2Pos, 7);

    for (const FreezeEvent& ev : plan.freeze_events) {
        bool hit = false;
        for (auto& g : out.groups)
            if (g.id == ev.sensor_id) {
                apply_freeze(g, ev.t_start);
                hit = true;
            }
        if (!hit) throw std::invalid_argument("freeze targets unknown sensor: " + ev.sensor_id);
        if (ev.t_start < 0.0 || ev.t_start > duration)
            throw std::invalid_argument("freeze start outside the run");
    }

    for (const auto& g : out.groups)
        for (const auto& row : g.samples)
            for (double v : row)
                if (!std::isfinite(v)) throw NonFiniteError("sensor sample not finite");

    return out;
}

}  // namespace velest
