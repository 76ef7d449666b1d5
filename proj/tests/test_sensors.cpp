#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "velest/common.hpp"
#include "velest/sensors.hpp"

using namespace velest;

namespace {

// uniformly sampled trajectory at 1 kHz with a caller-chosen fill
template <typename Fill>
std::vector<SimFrame> make_traj(double duration, Fill fill) {
    std::vector<SimFrame> traj;
    auto n = static_cast<std::size_t>(std::llround(duration * 1000.0)) + 1;
    traj.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SimFrame f;
        f.state.time = static_cast<double>(i) * 0.001;
        fill(f);
        traj.push_back(f);
    }
    return traj;
}

SensorFaultPlan quiet_plan() {
    SensorFaultPlan plan;
    plan.sigma_accel = 0.0;
    plan.sigma_gyro = 0.0;
    plan.sigma_wheel = 0.0;
    plan.sigma_steer = 0.0;
    plan.sigma_torque = 0.0;
    plan.sigma_ext_vel = 0.0;
    return plan;
}

}  // namespace

TEST_CASE("group inventory, rates and grids") {
    auto traj = make_traj(0.1, [](SimFrame&) {});
    RawSensorStream s = synthesize_sensors(traj, SensorFaultPlan{}, 3);

    REQUIRE(s.groups.size() == 7);
    CHECK(s.group("imu1").rate_hz == 200.0);
    CHECK(s.group("imu2").rate_hz == 125.0);
    CHECK(s.group("wheels").rate_hz == 100.0);
    CHECK(s.group("torques").rate_hz == 100.0);
    CHECK(s.group("steering").rate_hz == 200.0);
    CHECK(s.group("ext1").rate_hz == 200.0);
    CHECK(s.group("ext2").rate_hz == 100.0);
    CHECK(s.group("imu1").names == std::vector<std::string>{"ax", "ay", "gz"});
    CHECK(s.group("wheels").names ==
          std::vector<std::string>{"w_fl", "w_fr", "w_rl", "w_rr"});
    CHECK(s.group("torques").names ==
          std::vector<std::string>{"tq_fl", "tq_fr", "tq_rl", "tq_rr"});
    CHECK(s.group("steering").names == std::vector<std::string>{"steer"});
    CHECK(s.group("ext1").names == std::vector<std::string>{"vx", "vy"});

    // n = floor(duration * rate) + 1, ticks exactly at k / rate
    CHECK(s.group("imu1").t.size() == 21);
    CHECK(s.group("imu2").t.size() == 13);
    CHECK(s.group("wheels").t.size() == 11);
    for (std::size_t k = 0; k < s.group("imu2").t.size(); ++k)
        CHECK(s.group("imu2").t[k] == static_cast<double>(k) / 125.0);
    CHECK(s.find("imu3") == nullptr);
    CHECK_THROWS_AS(s.group("imu3"), std::runtime_error);
}

TEST_CASE("zero noise reproduces the trajectory exactly") {
    auto traj = make_traj(0.2, [](SimFrame& f) {
        f.state.vx = 5.0;
        f.state.vy = 0.3;
        f.state.yaw_rate = 0.5;
        f.state.ax = 1.25;
        f.state.ay = -0.75;
        f.state.wheel_omega = {25.0, 25.5, 26.0, 26.5};
        f.controls.steering = 0.04;
        f.controls.wheel_torques = {12.0, 12.0, 18.0, 18.0};
    });
    SensorFaultPlan plan = quiet_plan();
    plan.imu1_bias = {0.2, -0.1, 0.005};
    RawSensorStream s = synthesize_sensors(traj, plan, 9);

    for (const auto& row : s.group("imu1").samples) {
        CHECK(row[0] == 1.25 + 0.2);
        CHECK(row[1] == -0.75 - 0.1);
        CHECK(row[2] == 0.5 + 0.005);
    }
    CHECK(s.group("imu2").samples[0][0] == 1.25);  // unbiased
    CHECK(s.group("wheels").samples[3] == std::vector<double>{25.0, 25.5, 26.0, 26.5});
    CHECK(s.group("torques").samples[2] == std::vector<double>{12.0, 12.0, 18.0, 18.0});
    CHECK(s.group("steering").samples[5][0] == 0.04);
    // point velocity v_p = (vx - r*py, vy + r*px)
    CHECK(s.group("ext1").samples[0][0] == 5.0);
    CHECK(s.group("ext1").samples[0][1] == doctest::Approx(0.3 + 0.5 * -0.4).epsilon(1e-15));
    CHECK(s.group("ext2").samples[0][1] == doctest::Approx(0.3 + 0.5 * 0.3).epsilon(1e-15));
}

TEST_CASE("synthesis is bit-deterministic in the seed") {
    auto traj = make_traj(0.5, [](SimFrame& f) { f.state.vx = 3.0; });
    RawSensorStream a = synthesize_sensors(traj, SensorFaultPlan{}, 42);
    RawSensorStream b = synthesize_sensors(traj, SensorFaultPlan{}, 42);
    RawSensorStream c = synthesize_sensors(traj, SensorFaultPlan{}, 43);
    for (std::size_t g = 0; g < a.groups.size(); ++g) {
        CHECK(a.groups[g].samples == b.groups[g].samples);
        CHECK(a.groups[g].t == b.groups[g].t);
    }
    CHECK(a.group("imu1").samples != c.group("imu1").samples);
    // per-group streams: imu1 noise unchanged when only the wheel noise
    // would differ in draw order
    CHECK(a.group("imu1").samples[7] != a.group("imu2").samples[7]);
}

TEST_CASE("noise averages to the configured bias") {
    auto traj = make_traj(10.0, [](SimFrame&) {});
    SensorFaultPlan plan;
    plan.imu1_bias = {0.2, 0.2, 0.005};
    RawSensorStream s = synthesize_sensors(traj, plan, 7);
    const auto& rows = s.group("imu1").samples;
    double mean_ax = 0.0, mean_gz = 0.0;
    for (const auto& r : rows) {
        mean_ax += r[0];
        mean_gz += r[2];
    }
    mean_ax /= static_cast<double>(rows.size());
    mean_gz /= static_cast<double>(rows.size());
    // sigma_accel 0.05 over 2001 samples -> s.e. ~ 0.0011
    CHECK(std::abs(mean_ax - 0.2) < 0.005);
    CHECK(std::abs(mean_gz - 0.005) < 0.0005);
}

TEST_CASE("freeze repeats the last pre-fault sample") {
    auto traj = make_traj(0.1, [](SimFrame& f) { f.state.ax = f.state.time; });
    SensorFaultPlan plan = quiet_plan();
    plan.freeze_events.push_back({"imu2", 0.05});
    RawSensorStream s = synthesize_sensors(traj, plan, 1);

    // imu2 ticks every 8 ms; the last tick at or before 0.05 is t=0.048
    const auto& g = s.group("imu2");
    CHECK(g.samples[6][0] == doctest::Approx(0.048).epsilon(1e-12));
    for (std::size_t i = 7; i < g.samples.size(); ++i) CHECK(g.samples[i] == g.samples[6]);
    // other groups keep moving
    const auto& imu1 = s.group("imu1");
    CHECK(imu1.samples.back()[0] > imu1.samples[10][0]);

    // freeze landing exactly on a tick holds that tick
    SensorFaultPlan on_tick = quiet_plan();
    on_tick.freeze_events.push_back({"imu2", 0.008});
    RawSensorStream s2 = synthesize_sensors(traj, on_tick, 1);
    for (std::size_t i = 2; i < s2.group("imu2").samples.size(); ++i)
        CHECK(s2.group("imu2").samples[i] == s2.group("imu2").samples[1]);
}

TEST_CASE("fault plan validation") {
    auto traj = make_traj(0.1, [](SimFrame&) {});
    SensorFaultPlan unknown;
    unknown.freeze_events.push_back({"gps", 0.02});
    CHECK_THROWS_AS(synthesize_sensors(traj, unknown, 1), std::invalid_argument);
    SensorFaultPlan late;
    late.freeze_events.push_back({"imu1", 0.2});
    CHECK_THROWS_AS(synthesize_sensors(traj, late, 1), std::invalid_argument);
    SensorFaultPlan early;
    early.freeze_events.push_back({"imu1", -0.01});
    CHECK_THROWS_AS(synthesize_sensors(traj, early, 1), std::invalid_argument);
}

TEST_CASE("trajectory validation") {
    std::vector<SimFrame> one(1);
    CHECK_THROWS_AS(synthesize_sensors(one, SensorFaultPlan{}, 1), std::invalid_argument);

    std::vector<SimFrame> coarse(3);
    coarse[0].state.time = 0.0;
    coarse[1].state.time = 0.006;  // 166 Hz is too slow
    coarse[2].state.time = 0.012;
    CHECK_THROWS_AS(synthesize_sensors(coarse, SensorFaultPlan{}, 1), std::invalid_argument);

    std::vector<SimFrame> exact(3);
    exact[0].state.time = 0.0;
    exact[1].state.time = 0.005;
    exact[2].state.time = 0.010;
    CHECK_NOTHROW(synthesize_sensors(exact, quiet_plan(), 1));

    auto nan_traj = make_traj(0.01, [](SimFrame& f) { f.state.ax = NAN; });
    CHECK_THROWS_AS(synthesize_sensors(nan_traj, quiet_plan(), 1), NonFiniteError);
}
