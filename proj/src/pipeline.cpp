#include "velest/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "velest/common.hpp"
#include "velest/csv.hpp"

namespace velest {

Eigen::VectorXd SensorFrame::network_inputs() const {
    Eigen::VectorXd v(kNetworkInputDim);
    v << imu1_ax, imu1_ay, imu1_gz, imu2_ax, imu2_ay, imu2_gz, wheel_omega[0],
        wheel_omega[1], wheel_omega[2], wheel_omega[3], tq_f, tq_r, steering;
    return v;
}

namespace {

// index of the latest native sample at or before t
std::size_t hold_index(const std::vector<double>& times, double t) {
    auto it = std::upper_bound(times.begin(), times.end(), t + 1e-9);
    return static_cast<std::size_t>(std::distance(times.begin(), it)) - 1;
}

}  // namespace

std::vector<SensorFrame> zero_order_hold_sync(const RawSensorStream& stream,
                                              double rate) {
    if (rate <= 0.0) throw std::invalid_argument("rate must be positive");
    const char* required[] = {"imu1", "imu2", "wheels", "torques", "steering"};
    for (const char* id : required) stream.group(id);
    const ChannelGroup* ext1 = stream.find("ext1");

    double t_first = -1e300, t_last = 1e300;
    for (const auto& g : stream.groups) {
        if (g.t.empty()) throw std::invalid_argument("empty channel group: " + g.id);
        if (g.id == "ext2") continue;
        t_first = std::max(t_first, g.t.front());
        t_last = std::min(t_last, g.t.back());
    }
    const auto k0 = static_cast<long>(std::ceil(t_first * rate - 1e-9));
    const auto k1 = static_cast<long>(std::floor(t_last * rate + 1e-9));
    if (k1 < k0) throw std::invalid_argument("channel groups share no common span");
    const double tick0 = static_cast<double>(k0) / rate;
    for (const auto& g : stream.groups) {
        if (g.id == "ext2") continue;
        if (g.t.front() > tick0 + 1e-9)
            throw LeadingGapError(g.id + " starts after the first output tick");
    }

    const ChannelGroup& imu1 = stream.group("imu1");
    const ChannelGroup& imu2 = stream.group("imu2");
    const ChannelGroup& wheels = stream.group("wheels");
    const ChannelGroup& torques = stream.group("torques");
    const ChannelGroup& steering = stream.group("steering");

    std::vector<SensorFrame> out;
    out.reserve(static_cast<std::size_t>(k1 - k0 + 1));
    for (long k = k0; k <= k1; ++k) {
        const double t = static_cast<double>(k) / rate;
        SensorFrame f;
        f.t = t;
        {
            const auto& row = imu1.samples[hold_index(imu1.t, t)];
            f.imu1_ax = row[0];
            f.imu1_ay = row[1];
            f.imu1_gz = row[2];
        }
        {
            const auto& row = imu2.samples[hold_index(imu2.t, t)];
            f.imu2_ax = row[0];
            f.imu2_ay = row[1];
            f.imu2_gz = row[2];
        }
        {
            const auto& row = wheels.samples[hold_index(wheels.t, t)];
            for (int w = 0; w < 4; ++w) f.wheel_omega[static_cast<std::size_t>(w)] = row[static_cast<std::size_t>(w)];
        }
        {
            const auto& row = torques.samples[hold_index(torques.t, t)];
            f.tq_f = row[0] + row[1];
            f.tq_r = row[2] + row[3];
        }
        f.steering = steering.samples[hold_index(steering.t, t)][0];
        if (ext1) {
            const auto& row = ext1->samples[hold_index(ext1->t, t)];
            f.has_ext = true;
            f.ext_vx = row[0];
            f.ext_vy = row[1];
        }
        out.push_back(f);
    }
    return out;
}

std::vector<TargetFrame> generate_target(const std::vector<SensorFrame>& frames,
                                         const MkfConfig& cfg, double sigma) {
    if (frames.empty()) throw std::invalid_argument("no frames");
    if (!frames.front().has_ext)
        throw std::invalid_argument("target generation needs the external velocity channel");
    MkfConfig ref = cfg;
    ref.mode = FilterMode::reference;
    std::vector<FilterState> states = run_filter(frames, FilterMode::reference, ref);

    const double dt = frames.size() > 1 ? frames[1].t - frames[0].t : cfg.dt;
    const int half = std::max(1, static_cast<int>(std::lround(3.0 * sigma / dt)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    for (int j = -half; j <= half; ++j) {
        double u = static_cast<double>(j) * dt / sigma;
        kernel[static_cast<std::size_t>(j + half)] = std::exp(-0.5 * u * u);
    }

    const auto n = static_cast<long>(states.size());
    std::vector<TargetFrame> out(states.size());
    for (long i = 0; i < n; ++i) {
        Vector5d acc = Vector5d::Zero();
        double wsum = 0.0;
        for (int j = -half; j <= half; ++j) {
            long k = i + j;
            if (k < 0 || k >= n) continue;  // boundary: renormalize over what exists
            double w = kernel[static_cast<std::size_t>(j + half)];
            acc += w * states[static_cast<std::size_t>(k)].mean;
            wsum += w;
        }
        acc /= wsum;
        TargetFrame& tf = out[static_cast<std::size_t>(i)];
        tf.t = frames[static_cast<std::size_t>(i)].t;
        tf.vx = acc(0);
        tf.vy = acc(1);
        tf.yaw_rate = acc(2);
        tf.ax = acc(3);
        tf.ay = acc(4);
    }
    return out;
}

NormStats compute_norm_stats(const std::vector<Dataset>& train_sets) {
    if (train_sets.empty()) throw std::invalid_argument("empty training split");
    long n_in = 0, n_out = 0;
    Eigen::VectorXd in_sum = Eigen::VectorXd::Zero(kNetworkInputDim);
    Eigen::VectorXd in_sq = Eigen::VectorXd::Zero(kNetworkInputDim);
    Eigen::VectorXd out_sum = Eigen::VectorXd::Zero(kNetworkOutputDim);
    Eigen::VectorXd out_sq = Eigen::VectorXd::Zero(kNetworkOutputDim);

    for (const Dataset& ds : train_sets) {
        for (const SensorFrame& f : ds.frames) {
            Eigen::VectorXd v = f.network_inputs();
            in_sum += v;
            in_sq += v.cwiseProduct(v);
            ++n_in;
        }
        for (const TargetFrame& t : ds.targets) {
            Eigen::VectorXd v(kNetworkOutputDim);
            v << t.vx, t.vy, t.yaw_rate, t.ax, t.ay;
            out_sum += v;
            out_sq += v.cwiseProduct(v);
            ++n_out;
        }
    }
    if (n_in == 0 || n_out == 0) throw std::invalid_argument("training split has no frames");

    NormStats s;
    s.in_mean = in_sum / static_cast<double>(n_in);
    s.in_std = (in_sq / static_cast<double>(n_in) - s.in_mean.cwiseProduct(s.in_mean))
                   .cwiseMax(0.0)
                   .cwiseSqrt();
    s.out_mean = out_sum / static_cast<double>(n_out);
    s.out_std = (out_sq / static_cast<double>(n_out) - s.out_mean.cwiseProduct(s.out_mean))
                    .cwiseMax(0.0)
                    .cwiseSqrt();
    for (long i = 0; i < s.in_std.size(); ++i)
        if (s.in_std(i) < 1e-9)
            throw DegenerateChannelError("input channel " + std::to_string(i) + " is constant");
    for (long i = 0; i < s.out_std.size(); ++i)
        if (s.out_std(i) < 1e-9)
            throw DegenerateChannelError("output channel " + std::to_string(i) + " is constant");
    return s;
}

SplitAssignment build_splits(const std::vector<Dataset>& sets) {
    const auto n = static_cast<long>(sets.size());
    if (n < 3) throw InsufficientScenariosError("need at least one scenario per split");

    // largest-remainder quotas on the 11:3:4 ratio
    const double ratios[3] = {11.0 / 18.0, 3.0 / 18.0, 4.0 / 18.0};
    long quota[3];
    double rem[3];
    long assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = ratios[i] * static_cast<double>(n);
        quota[i] = static_cast<long>(std::floor(exact));
        rem[i] = exact - static_cast<double>(quota[i]);
        assigned += quota[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rem[i] > rem[best]) best = i;
        ++quota[best];
        rem[best] = -1.0;
        ++assigned;
    }
    for (int i = 0; i < 3; ++i)
        if (quota[i] == 0) throw InsufficientScenariosError("a split would be empty");

    // surfaces in first-appearance order
    std::vector<std::string> surfaces;
    for (const Dataset& ds : sets)
        if (std::find(surfaces.begin(), surfaces.end(), ds.surface) == surfaces.end())
            surfaces.push_back(ds.surface);
    for (const std::string& s : surfaces) {
        long c = std::count_if(sets.begin(), sets.end(),
                               [&](const Dataset& d) { return d.surface == s; });
        if (c < 3)
            throw InsufficientScenariosError("surface " + s +
                                             " has fewer than 3 scenarios");
    }

    std::vector<int> where(sets.size(), -1);  // 0 train, 1 test, 2 validation
    long count[3] = {0, 0, 0};
    // coverage first: per surface, earliest -> test, next -> validation,
    // next -> train
    for (const std::string& s : surfaces) {
        int stage = 0;
        const int order[3] = {1, 2, 0};
        for (std::size_t i = 0; i < sets.size() && stage < 3; ++i) {
            if (sets[i].surface != s || where[i] != -1) continue;
            where[i] = order[stage];
            ++count[order[stage]];
            ++stage;
        }
    }
    // fill the rest: train to quota, then validation, then test, rest train
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (where[i] != -1) continue;
        if (count[0] < quota[0])
            where[i] = 0;
        else if (count[2] < quota[2])
            where[i] = 2;
        else if (count[1] < quota[1])
            where[i] = 1;
        else
            where[i] = 0;
        ++count[where[i]];
    }

    SplitAssignment out;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (where[i] == 0) out.train.push_back(sets[i].name);
        if (where[i] == 1) out.test.push_back(sets[i].name);
        if (where[i] == 2) out.validation.push_back(sets[i].name);
    }
    return out;
}

Dataset make_dataset(const ScenarioResult& result, const std::string& name) {
    Dataset ds;
    ds.name = name;
    ds.surface = result.manifest.get_string("surface", "flat");
    ds.seed = static_cast<uint64_t>(result.manifest.get_int("seed", 0));
    ds.frames = zero_order_hold_sync(result.stream);
    const std::size_t n = std::min(ds.frames.size(), result.trajectory.size());
    ds.frames.resize(n);
    ds.ground_truth.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(result.trajectory[i].state.time - ds.frames[i].t) > 1e-6)
            throw LengthMismatchError("frames and trajectory grids disagree");
        ds.ground_truth.push_back(result.trajectory[i].state);
    }
    return ds;
}

// --- CSV -------------------------------------------------------------

namespace {

const std::vector<std::string> kFrameCols = {
    "t",    "imu1_ax", "imu1_ay", "imu1_gz", "imu2_ax", "imu2_ay", "imu2_gz",
    "w_fl", "w_fr",    "w_rl",    "w_rr",    "tq_f",    "tq_r",    "steer"};

const std::vector<std::string> kTruthCols = {
    "t",  "vx", "vy",      "yawrate", "ax",   "ay",   "x",
    "y",  "heading", "w_fl", "w_fr", "w_rl", "w_rr"};

}  // namespace

void write_dataset_csv(const Dataset& ds, const std::string& frames_path) {
    bool ext = !ds.frames.empty() && ds.frames.front().has_ext;
    std::vector<std::string> cols = kFrameCols;
    if (ext) {
        cols.push_back("ext_vx");
        cols.push_back("ext_vy");
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(ds.frames.size());
    for (const SensorFrame& f : ds.frames) {
        std::vector<double> r = {f.t,
                                 f.imu1_ax,
                                 f.imu1_ay,
                                 f.imu1_gz,
                                 f.imu2_ax,
                                 f.imu2_ay,
                                 f.imu2_gz,
                                 f.wheel_omega[0],
                                 f.wheel_omega[1],
                                 f.wheel_omega[2],
                                 f.wheel_omega[3],
                                 f.tq_f,
                                 f.tq_r,
                                 f.steering};
        if (ext) {
            r.push_back(f.ext_vx);
            r.push_back(f.ext_vy);
        }
        rows.push_back(std::move(r));
    }
    write_csv(frames_path, cols, rows);
}

void write_target_csv(const Dataset& ds, const std::string& targets_path) {
    std::vector<std::vector<double>> rows;
    rows.reserve(ds.targets.size());
    for (const TargetFrame& t : ds.targets)
        rows.push_back({t.t, t.vx, t.vy, t.yaw_rate, t.ax, t.ay});
    write_csv(targets_path, {"t", "vx", "vy", "yawrate", "ax", "ay"}, rows);
}

Dataset read_dataset_csv(const std::string& frames_path, const std::string& targets_path) {
    CsvTable tbl = read_csv(frames_path);
    for (std::size_t i = 0; i < kFrameCols.size(); ++i)
        if (i >= tbl.columns.size() || tbl.columns[i] != kFrameCols[i])
            throw std::runtime_error(frames_path + ": unexpected column layout");
    bool ext = tbl.columns.size() >= kFrameCols.size() + 2 &&
               tbl.columns[kFrameCols.size()] == "ext_vx";

    Dataset ds;
    ds.name = std::filesystem::path(frames_path).stem().string();
    ds.frames.reserve(tbl.rows.size());
    for (const auto& r : tbl.rows) {
        SensorFrame f;
        f.t = r[0];
        f.imu1_ax = r[1];
        f.imu1_ay = r[2];
        f.imu1_gz = r[3];
        f.imu2_ax = r[4];
        f.imu2_ay = r[5];
        f.imu2_gz = r[6];
        for (int w = 0; w < 4; ++w)
            f.wheel_omega[static_cast<std::size_t>(w)] = r[static_cast<std::size_t>(7 + w)];
        f.tq_f = r[11];
        f.tq_r = r[12];
        f.steering = r[13];
        if (ext) {
            f.has_ext = true;
            f.ext_vx = r[14];
            f.ext_vy = r[15];
        }
        ds.frames.push_back(f);
    }
    if (!targets_path.empty()) {
        CsvTable tt = read_csv(targets_path);
        ds.targets.reserve(tt.rows.size());
        for (const auto& r : tt.rows)
            ds.targets.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
        if (ds.targets.size() != ds.frames.size())
            throw LengthMismatchError("frames and targets differ in length");
    }
    return ds;
}

void write_estimates_csv(const std::vector<FilterState>& states, const std::string& path) {
    std::vector<std::string> cols = {"t", "vx", "vy", "yawrate", "ax", "ay"};
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            cols.push_back("p" + std::to_string(i) + std::to_string(j));
    std::vector<std::vector<double>> rows;
    rows.reserve(states.size());
    for (const FilterState& s : states) {
        std::vector<double> r = {s.time, s.mean(0), s.mean(1), s.mean(2), s.mean(3), s.mean(4)};
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) r.push_back(s.cov(i, j));
        rows.push_back(std::move(r));
    }
    write_csv(path, cols, rows);
}

void write_scenario_outputs(const ScenarioResult& result, const std::string& out_dir,
                            const std::string& stem) {
    std::filesystem::create_directories(out_dir);
    auto base = std::filesystem::path(out_dir) / stem;

    for (const ChannelGroup& g : result.stream.groups) {
        std::vector<std::string> cols = {"t"};
        cols.insert(cols.end(), g.names.begin(), g.names.end());
        std::vector<std::vector<double>> rows;
        rows.reserve(g.t.size());
        for (std::size_t i = 0; i < g.t.size(); ++i) {
            std::vector<double> r = {g.t[i]};
            r.insert(r.end(), g.samples[i].begin(), g.samples[i].end());
            rows.push_back(std::move(r));
        }
        write_csv(base.string() + "_" + g.id + ".csv", cols, rows);
    }

    std::vector<std::vector<double>> rows;
    rows.reserve(result.trajectory.size());
    for (const SimFrame& fr : result.trajectory) {
        const GroundTruthState& s = fr.state;
        rows.push_back({s.time, s.vx, s.vy, s.yaw_rate, s.ax, s.ay, s.x, s.y, s.heading,
                        s.wheel_omega[0], s.wheel_omega[1], s.wheel_omega[2],
                        s.wheel_omega[3]});
    }
    write_csv(base.string() + "_truth.csv", kTruthCols, rows);
    result.manifest.save(base.string() + "_manifest.cfg");
}

RawSensorStream read_stream_csvs(const std::string& dir, const std::string& stem) {
    RawSensorStream stream;
    auto base = std::filesystem::path(dir) / stem;
    for (const char* id : {"imu1", "imu2", "wheels", "torques", "steering", "ext1", "ext2"}) {
        std::string path = base.string() + "_" + id + ".csv";
        if (!std::filesystem::exists(path)) continue;
        CsvTable tbl = read_csv(path);
        ChannelGroup g;
        g.id = id;
        g.names.assign(tbl.columns.begin() + 1, tbl.columns.end());
        g.t.reserve(tbl.rows.size());
        g.samples.reserve(tbl.rows.size());
        for (const auto& r : tbl.rows) {
            g.t.push_back(r[0]);
            g.samples.emplace_back(r.begin() + 1, r.end());
        }
        if (g.t.size() > 1) g.rate_hz = 1.0 / (g.t[1] - g.t[0]);
        stream.groups.push_back(std::move(g));
    }
    if (stream.groups.empty())
        throw std::runtime_error("no channel CSVs found for " + base.string());
    return stream;
}

std::vector<GroundTruthState> read_truth_csv(const std::string& path) {
    CsvTable tbl = read_csv(path);
    std::vector<GroundTruthState> out;
    out.reserve(tbl.rows.size());
    for (const auto& r : tbl.rows) {
        GroundTruthState s;
        s.time = r[0];
        s.vx = r[1];
        s.vy = r[2];
        s.yaw_rate = r[3];
        s.ax = r[4];
        s.ay = r[5];
        s.x = r[6];
        s.y = r[7];
        s.heading = r[8];
        for (int w = 0; w < 4; ++w)
            s.wheel_omega[static_cast<std::size_t>(w)] = r[static_cast<std::size_t>(9 + w)];
        out.push_back(s);
    }
    return out;
}

}  // namespace velest
