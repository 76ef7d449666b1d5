#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "velest/common.hpp"
#include "velest/csv.hpp"
#include "velest/pipeline.hpp"
#include "velest/scenario.hpp"

using namespace velest;

namespace {

ChannelGroup ramp_group(const std::string& id, double rate,
                        std::vector<std::string> names, double t0, double t1,
                        double scale) {
    ChannelGroup g;
    g.id = id;
    g.rate_hz = rate;
    g.names = names;
    for (long k = 0;; ++k) {
        double t = t0 + static_cast<double>(k) / rate;
        if (t > t1 + 1e-12) break;
        g.t.push_back(t);
        std::vector<double> row(names.size());
        for (std::size_t c = 0; c < row.size(); ++c)
            row[c] = scale * static_cast<double>(k) + static_cast<double>(c);
        g.samples.push_back(std::move(row));
    }
    return g;
}

RawSensorStream basic_stream(double t1 = 0.04) {
    RawSensorStream s;
    s.groups.push_back(ramp_group("imu1", 200.0, {"ax", "ay", "gz"}, 0.0, t1, 1.0));
    s.groups.push_back(ramp_group("imu2", 125.0, {"ax", "ay", "gz"}, 0.0, t1, 10.0));
    s.groups.push_back(
        ramp_group("wheels", 100.0, {"w_fl", "w_fr", "w_rl", "w_rr"}, 0.0, t1, 100.0));
    s.groups.push_back(
        ramp_group("torques", 100.0, {"tq_fl", "tq_fr", "tq_rl", "tq_rr"}, 0.0, t1, 5.0));
    s.groups.push_back(ramp_group("steering", 200.0, {"steer"}, 0.0, t1, 0.01));
    return s;
}

}  // namespace

TEST_CASE("zero-order hold picks the latest sample per native grid") {
    RawSensorStream s = basic_stream();
    std::vector<SensorFrame> frames = zero_order_hold_sync(s);

    REQUIRE(frames.size() == 9);  // 0 .. 0.04 at 200 Hz
    for (std::size_t k = 0; k < frames.size(); ++k)
        CHECK(frames[k].t == static_cast<double>(k) / 200.0);

    // imu1 ticks with the output grid: value = tick index
    CHECK(frames[3].imu1_ax == 3.0);
    CHECK(frames[3].imu1_ay == 4.0);  // column offset

    // imu2 at 125 Hz: t=0.015 holds the 0.008 sample (k=1), t=0.016 the
    // 0.016 sample (k=2)
    CHECK(frames[3].imu2_ax == 10.0);
    CHECK(frames[4].imu2_ax == 20.0);
    // wheels at 100 Hz: t=0.005 still holds the t=0 row
    CHECK(frames[1].wheel_omega[0] == 0.0);
    CHECK(frames[2].wheel_omega[0] == 100.0);
    CHECK(frames[2].wheel_omega[3] == 103.0);

    // torques collapse to axle sums: row k has {5k, 5k+1, 5k+2, 5k+3}
    CHECK(frames[0].tq_f == 1.0);
    CHECK(frames[0].tq_r == 5.0);
    CHECK(frames[2].tq_f == 11.0);
    CHECK(frames[2].tq_r == 15.0);

    // no ext group -> no ext columns
    CHECK(!frames[0].has_ext);
}

TEST_CASE("external velocity feeds the optional columns, ext2 is ignored") {
    RawSensorStream s = basic_stream();
    s.groups.push_back(ramp_group("ext1", 200.0, {"vx", "vy"}, 0.0, 0.04, 2.0));
    // ext2 covers a shorter span; it must not shrink the output
    s.groups.push_back(ramp_group("ext2", 100.0, {"vx", "vy"}, 0.02, 0.03, 1.0));
    std::vector<SensorFrame> frames = zero_order_hold_sync(s);
    REQUIRE(frames.size() == 9);
    CHECK(frames[0].has_ext);
    CHECK(frames[4].ext_vx == 8.0);
    CHECK(frames[4].ext_vy == 9.0);
}

TEST_CASE("sync span is the intersection of the native spans") {
    RawSensorStream s = basic_stream();
    // imu2 stops early: its last tick at 0.024 caps the grid
    s.groups[1].t.resize(4);
    s.groups[1].samples.resize(4);
    std::vector<SensorFrame> frames = zero_order_hold_sync(s);
    REQUIRE(frames.size() == 5);  // ticks 0 .. 0.02
    CHECK(frames.back().t == 0.02);

    // a group starting later shifts the first tick up instead
    RawSensorStream d = basic_stream();
    d.groups[2] = ramp_group("wheels", 100.0, {"w_fl", "w_fr", "w_rl", "w_rr"},
                             0.013, 0.04, 100.0);
    std::vector<SensorFrame> late = zero_order_hold_sync(d);
    CHECK(late.front().t == 0.015);
    CHECK(late.front().wheel_omega[0] == 0.0);  // the 0.013 sample held
    CHECK(late.back().t == 0.03);  // wheels' last native tick is 0.033
}

TEST_CASE("sync input validation") {
    RawSensorStream s = basic_stream();
    CHECK_THROWS_AS(zero_order_hold_sync(s, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(zero_order_hold_sync(s, -5.0), std::invalid_argument);

    RawSensorStream missing = basic_stream();
    missing.groups.erase(missing.groups.begin() + 1);  // drop imu2
    CHECK_THROWS_AS(zero_order_hold_sync(missing), std::runtime_error);

    RawSensorStream empty = basic_stream();
    empty.groups[0].t.clear();
    empty.groups[0].samples.clear();
    CHECK_THROWS_AS(zero_order_hold_sync(empty), std::invalid_argument);

    RawSensorStream disjoint = basic_stream();
    disjoint.groups[1] = ramp_group("imu2", 125.0, {"ax", "ay", "gz"}, 0.2, 0.3, 1.0);
    CHECK_THROWS_AS(zero_order_hold_sync(disjoint), std::invalid_argument);
}

TEST_CASE("datasets align frames with ground truth") {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::standstill;
    spec.duration = 5.0;
    spec.seed = 6;
    ScenarioResult r = run_scenario(spec, VehicleParams{});
    Dataset ds = make_dataset(r, "standstill_flat_6");

    CHECK(ds.name == "standstill_flat_6");
    CHECK(ds.surface == "flat");
    CHECK(ds.seed == 6);
    // the 100 Hz groups end at 4.99, trimming the 200 Hz grid to 999
    CHECK(ds.frames.size() == 999);
    REQUIRE(ds.ground_truth.size() == ds.frames.size());
    CHECK(ds.targets.empty());
    for (std::size_t i = 0; i < ds.frames.size(); i += 97)
        CHECK(std::abs(ds.ground_truth[i].time - ds.frames[i].t) <= 1e-6);
    CHECK(ds.duration() == doctest::Approx(4.99).epsilon(1e-12));
}

TEST_CASE("target generation is the reference filter plus a gaussian smoother") {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::launch;
    spec.duration = 6.0;
    spec.seed = 8;
    ScenarioResult r = run_scenario(spec, VehicleParams{});
    Dataset ds = make_dataset(r, "launch_flat_8");
    REQUIRE(ds.frames.front().has_ext);
    MkfConfig cfg;

    // a vanishing sigma reduces the smoother to the identity
    std::vector<TargetFrame> sharp = generate_target(ds.frames, cfg, 1e-9);
    std::vector<FilterState> states = run_filter(ds.frames, FilterMode::reference, cfg);
    REQUIRE(sharp.size() == states.size());
    for (std::size_t i = 0; i < sharp.size(); i += 53) {
        CHECK(sharp[i].vx == doctest::Approx(states[i].mean(0)).epsilon(1e-12));
        CHECK(sharp[i].vy == doctest::Approx(states[i].mean(1)).epsilon(1e-12));
        CHECK(sharp[i].t == ds.frames[i].t);
    }

    // the default sigma must match an independently computed kernel,
    // including the renormalized boundaries
    std::vector<TargetFrame> smooth = generate_target(ds.frames, cfg, 0.05);
    const double dt = ds.frames[1].t - ds.frames[0].t;
    const int half = std::max(1, static_cast<int>(std::lround(3.0 * 0.05 / dt)));
    const auto n = static_cast<long>(states.size());
    for (long i : {0L, 1L, 29L, 30L, 500L, n - 1}) {
        double acc = 0.0, wsum = 0.0;
        for (int j = -half; j <= half; ++j) {
            long k = i + j;
            if (k < 0 || k >= n) continue;
            double u = static_cast<double>(j) * dt / 0.05;
            double w = std::exp(-0.5 * u * u);
            acc += w * states[static_cast<std::size_t>(k)].mean(0);
            wsum += w;
        }
        CHECK(smooth[static_cast<std::size_t>(i)].vx ==
              doctest::Approx(acc / wsum).epsilon(1e-12));
    }
    // smoothing attenuates frame-to-frame jitter
    double rough_sharp = 0.0, rough_smooth = 0.0;
    for (std::size_t i = 1; i < sharp.size(); ++i) {
        rough_sharp += std::abs(sharp[i].ay - sharp[i - 1].ay);
        rough_smooth += std::abs(smooth[i].ay - smooth[i - 1].ay);
    }
    CHECK(rough_smooth < 0.5 * rough_sharp);

    CHECK_THROWS_AS(generate_target({}, cfg), std::invalid_argument);
    auto no_ext = ds.frames;
    for (auto& f : no_ext) f.has_ext = false;
    CHECK_THROWS_AS(generate_target(no_ext, cfg), std::invalid_argument);
}

TEST_CASE("normalization statistics are the population moments") {
    Dataset ds;
    ds.name = "a";
    ds.surface = "flat";
    for (double v : {-1.0, 1.0}) {
        SensorFrame f;
        f.imu1_ax = f.imu1_ay = f.imu1_gz = v;
        f.imu2_ax = f.imu2_ay = f.imu2_gz = v;
        f.wheel_omega = {v, v, v, v};
        f.tq_f = f.tq_r = v;
        f.steering = v;
        ds.frames.push_back(f);
        TargetFrame t;
        t.vx = t.vy = t.yaw_rate = t.ax = t.ay = v;
        ds.targets.push_back(t);
    }
    NormStats s = compute_norm_stats({ds});
    for (long i = 0; i < 13; ++i) {
        CHECK(s.in_mean(i) == 0.0);
        CHECK(s.in_std(i) == 1.0);
    }
    for (long i = 0; i < 5; ++i) {
        CHECK(s.out_mean(i) == 0.0);
        CHECK(s.out_std(i) == 1.0);
    }

    Dataset flatline = ds;
    flatline.frames[1] = flatline.frames[0];  // constant input channels
    CHECK_THROWS_AS(compute_norm_stats({flatline}), DegenerateChannelError);
    CHECK_THROWS_AS(compute_norm_stats({}), std::invalid_argument);
    Dataset no_targets = ds;
    no_targets.targets.clear();
    CHECK_THROWS_AS(compute_norm_stats({no_targets}), std::invalid_argument);
}

TEST_CASE("splits follow the 11:3:4 quota with per-surface coverage") {
    auto mk = [](const std::string& name, const std::string& surface) {
        Dataset d;
        d.name = name;
        d.surface = surface;
        return d;
    };
    std::vector<Dataset> sets;
    for (int i = 0; i < 9; ++i) sets.push_back(mk("f" + std::to_string(i), "flat"));
    for (int i = 0; i < 5; ++i) sets.push_back(mk("g" + std::to_string(i), "gravel"));
    for (int i = 0; i < 4; ++i) sets.push_back(mk("w" + std::to_string(i), "wet"));

    SplitAssignment sp = build_splits(sets);
    CHECK(sp.train.size() == 11);
    CHECK(sp.test.size() == 3);
    CHECK(sp.validation.size() == 4);
    // coverage: first of each surface goes to test, second to validation
    CHECK(sp.test == std::vector<std::string>{"f0", "g0", "w0"});
    CHECK(sp.validation == std::vector<std::string>{"f1", "g1", "w1", "w3"});
    // everything lands in exactly one split
    std::vector<std::string> all;
    for (const auto& v : {sp.train, sp.test, sp.validation})
        all.insert(all.end(), v.begin(), v.end());
    CHECK(all.size() == sets.size());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());

    // identical input order -> identical assignment
    SplitAssignment sp2 = build_splits(sets);
    CHECK(sp2.train == sp.train);
    CHECK(sp2.test == sp.test);
    CHECK(sp2.validation == sp.validation);

    // 3 per surface collapses to one per split and surface
    std::vector<Dataset> nine;
    for (const char* s : {"flat", "gravel", "wet"})
        for (int i = 0; i < 3; ++i) nine.push_back(mk(std::string(s) + std::to_string(i), s));
    SplitAssignment sp9 = build_splits(nine);
    CHECK(sp9.train.size() == 3);
    CHECK(sp9.test.size() == 3);
    CHECK(sp9.validation.size() == 3);

    CHECK_THROWS_AS(build_splits({mk("a", "flat"), mk("b", "flat")}),
                    InsufficientScenariosError);
    std::vector<Dataset> thin;
    for (int i = 0; i < 4; ++i) thin.push_back(mk("f" + std::to_string(i), "flat"));
    thin.push_back(mk("g0", "gravel"));
    thin.push_back(mk("g1", "gravel"));
    CHECK_THROWS_AS(build_splits(thin), InsufficientScenariosError);
    // one surface, three sets: the 3:1:1-ish quota zeroes a split
    std::vector<Dataset> three;
    for (int i = 0; i < 3; ++i) three.push_back(mk("f" + std::to_string(i), "flat"));
    CHECK_THROWS_AS(build_splits(three), InsufficientScenariosError);
}

TEST_CASE("dataset csv round trip") {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::standstill;
    spec.duration = 4.0;
    spec.seed = 14;
    ScenarioResult r = run_scenario(spec, VehicleParams{});
    Dataset ds = make_dataset(r, "roundtrip");
    MkfConfig cfg;
    ds.targets = generate_target(ds.frames, cfg);

    write_dataset_csv(ds, "rt_frames.csv");
    write_target_csv(ds, "rt_targets.csv");
    Dataset back = read_dataset_csv("rt_frames.csv", "rt_targets.csv");

    REQUIRE(back.frames.size() == ds.frames.size());
    REQUIRE(back.targets.size() == ds.targets.size());
    CHECK(back.name == "rt_frames");
    for (std::size_t i = 0; i < ds.frames.size(); i += 131) {
        CHECK(back.frames[i].t == ds.frames[i].t);  // 6-decimal grid is exact
        CHECK(back.frames[i].imu1_ax ==
              doctest::Approx(ds.frames[i].imu1_ax).epsilon(1e-11));
        CHECK(back.frames[i].tq_r == doctest::Approx(ds.frames[i].tq_r).epsilon(1e-11));
        CHECK(back.frames[i].has_ext == ds.frames[i].has_ext);
        CHECK(back.frames[i].ext_vy == doctest::Approx(ds.frames[i].ext_vy).epsilon(1e-11));
        CHECK(back.targets[i].vy == doctest::Approx(ds.targets[i].vy).epsilon(1e-11));
    }

    // truncated targets are refused
    {
        CsvTable t = read_csv("rt_targets.csv");
        t.rows.pop_back();
        write_csv("rt_targets_short.csv", t.columns, t.rows);
        CHECK_THROWS_AS(read_dataset_csv("rt_frames.csv", "rt_targets_short.csv"),
                        LengthMismatchError);
    }
    // wrong column layout is refused
    {
        std::ofstream bad("rt_bad.csv");
        bad << "t,foo\n0.0,1.0\n";
        bad.close();
        CHECK_THROWS_AS(read_dataset_csv("rt_bad.csv"), std::runtime_error);
    }
    for (const char* p : {"rt_frames.csv", "rt_targets.csv", "rt_targets_short.csv",
                          "rt_bad.csv"})
        std::remove(p);
}

TEST_CASE("estimate csv carries the full covariance") {
    FilterState a;
    a.mean << 1, 2, 3, 4, 5;
    a.cov = Matrix5d::Identity() * 0.25;
    a.cov(0, 4) = a.cov(4, 0) = -0.125;
    a.time = 0.0;
    FilterState b = a;
    b.time = 0.005;
    b.mean(0) = 1.5;
    write_estimates_csv({a, b}, "est.csv");

    CsvTable tbl = read_csv("est.csv");
    REQUIRE(tbl.columns.size() == 31);
    CHECK(tbl.columns[0] == "t");
    CHECK(tbl.columns[6] == "p00");
    CHECK(tbl.columns[30] == "p44");
    REQUIRE(tbl.rows.size() == 2);
    CHECK(tbl.rows[0][1] == 1.0);
    CHECK(tbl.rows[1][1] == 1.5);
    CHECK(tbl.rows[0][6] == 0.25);
    CHECK(tbl.rows[0][10] == -0.125);  // p04
    CHECK(tbl.rows[0][26] == -0.125);  // p40
    std::remove("est.csv");
}

TEST_CASE("scenario outputs round trip through the per-group csvs") {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::standstill;
    spec.duration = 4.0;
    spec.seed = 21;
    ScenarioResult r = run_scenario(spec, VehicleParams{});
    const std::string dir = "sc_out_tmp";
    write_scenario_outputs(r, dir, "st_flat_21");

    RawSensorStream s = read_stream_csvs(dir, "st_flat_21");
    REQUIRE(s.groups.size() == 7);
    for (const ChannelGroup& g : s.groups) {
        const ChannelGroup& orig = r.stream.group(g.id);
        REQUIRE(g.t.size() == orig.t.size());
        CHECK(g.names == orig.names);
        CHECK(g.rate_hz == doctest::Approx(orig.rate_hz).epsilon(1e-9));
        for (std::size_t i = 0; i < g.t.size(); i += 101) {
            CHECK(g.t[i] == orig.t[i]);
            CHECK(g.samples[i][0] == doctest::Approx(orig.samples[i][0]).epsilon(1e-11));
        }
    }
    auto truth = read_truth_csv(dir + "/st_flat_21_truth.csv");
    REQUIRE(truth.size() == r.trajectory.size());
    CHECK(truth[100].time == r.trajectory[100].state.time);
    CHECK(truth[100].vx == doctest::Approx(r.trajectory[100].state.vx).epsilon(1e-11));
    KeyValueConfig m = KeyValueConfig::load(dir + "/st_flat_21_manifest.cfg");
    CHECK(m.get_string("scenario") == "standstill");

    CHECK_THROWS_AS(read_stream_csvs(dir, "nonexistent"), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("csv reader rejects malformed files") {
    {
        std::ofstream f("bad_ragged.csv");
        f << "a,b\n1.0,2.0\n3.0\n";
    }
    CHECK_THROWS_AS(read_csv("bad_ragged.csv"), std::runtime_error);
    std::remove("bad_ragged.csv");
    {
        std::ofstream f("bad_empty.csv");
    }
    CHECK_THROWS_AS(read_csv("bad_empty.csv"), std::runtime_error);
    std::remove("bad_empty.csv");
    CHECK_THROWS_AS(read_csv("no_such_file.csv"), std::runtime_error);

    CsvTable t;
    t.columns = {"x", "y"};
    CHECK(t.column_index("y") == 1);
    CHECK(t.column_index("z") == -1);
}
