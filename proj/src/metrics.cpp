#include "velest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "velest/common.hpp"
#include "velest/csv.hpp"
#include "velest/pipeline.hpp"
#include "velest/scenario.hpp"

namespace velest {

double rmse(const std::vector<double>& pred, const std::vector<double>& ref) {
    if (pred.size() != ref.size())
        throw LengthMismatchError("rmse needs equal-length series");
    if (pred.empty()) throw std::invalid_argument("rmse of empty series");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - ref[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double percent_error(double rmse_value, double normalizer) {
    if (!(normalizer > 0.0)) throw ZeroNormalizerError("normalizer must be positive");
    return 100.0 * rmse_value / normalizer;
}

namespace {

const char* kChannels[5] = {"vx", "vy", "yaw_rate", "ax", "ay"};

double channel_of(const StateEstimate& e, int c) {
    switch (c) {
        case 0: return e.vx;
        case 1: return e.vy;
        case 2: return e.yaw_rate;
        case 3: return e.ax;
        default: return e.ay;
    }
}

double channel_of(const GroundTruthState& s, int c) {
    switch (c) {
        case 0: return s.vx;
        case 1: return s.vy;
        case 2: return s.yaw_rate;
        case 3: return s.ax;
        default: return s.ay;
    }
}

}  // namespace

MetricReport compare_estimators(
    const std::vector<Dataset>& sets,
    const std::map<std::string, std::vector<std::vector<StateEstimate>>>& tracks,
    double warmup_s) {
    if (sets.empty()) throw std::invalid_argument("nothing to evaluate");
    for (const auto& [name, per_set] : tracks) {
        if (per_set.size() != sets.size())
            throw LengthMismatchError(name + ": estimator covers a different dataset count");
        for (std::size_t i = 0; i < sets.size(); ++i)
            if (per_set[i].size() != sets[i].ground_truth.size())
                throw LengthMismatchError(name + ": series not aligned with ground truth");
    }

    MetricReport rep;
    rep.warmup = warmup_s;

    // pooled over datasets: per-channel sum of squares and counts
    double norm[5] = {0, 0, 0, 0, 0};
    std::vector<std::size_t> start(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const Dataset& ds = sets[i];
        double t0 = ds.frames.empty() ? 0.0 : ds.frames.front().t;
        std::size_t s = 0;
        while (s < ds.ground_truth.size() && ds.ground_truth[s].time - t0 < warmup_s - 1e-9)
            ++s;
        start[i] = s;
        for (std::size_t k = s; k < ds.ground_truth.size(); ++k)
            for (int c = 0; c < 5; ++c)
                norm[c] = std::max(norm[c], std::abs(channel_of(ds.ground_truth[k], c)));
    }
    for (int c = 0; c < 5; ++c) {
        if (norm[c] <= 0.0)
            throw ZeroNormalizerError(std::string("channel ") + kChannels[c] +
                                      " never leaves zero in the evaluation data");
        rep.normalizers[kChannels[c]] = norm[c];
    }

    for (const auto& [name, per_set] : tracks) {
        double ss[5] = {0, 0, 0, 0, 0};
        long n = 0;
        for (std::size_t i = 0; i < sets.size(); ++i) {
            const Dataset& ds = sets[i];
            for (std::size_t k = start[i]; k < ds.ground_truth.size(); ++k) {
                for (int c = 0; c < 5; ++c) {
                    double d = channel_of(per_set[i][k], c) - channel_of(ds.ground_truth[k], c);
                    ss[c] += d * d;
                }
                ++n;
            }
        }
        if (n == 0) throw LengthMismatchError("warm-up leaves no samples to score");
        for (int c = 0; c < 5; ++c) {
            ChannelMetrics m;
            m.rmse = std::sqrt(ss[c] / static_cast<double>(n));
            m.percent = percent_error(m.rmse, norm[c]);
            rep.rows[name][kChannels[c]] = m;
        }
    }
    return rep;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "estimator";
    for (const char* c : kChannels) os << "," << c << "_rmse," << c << "_pct";
    os << "\n";
    for (const auto& [name, row] : rows) {
        os << name;
        for (const char* c : kChannels) {
            const ChannelMetrics& m = row.at(c);
            os << "," << m.rmse << "," << m.percent;
        }
        os << "\n";
    }
    os << "normalizers";
    for (const char* c : kChannels) os << "," << normalizers.at(c) << ",";
    os << "\n";
    return os.str();
}

void write_report_csv(const MetricReport& report, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "estimator");
    for (const char* c : kChannels) std::fprintf(f, ",%s_rmse,%s_pct", c, c);
    std::fprintf(f, "\n");
    for (const auto& [name, row] : report.rows) {
        std::fprintf(f, "%s", name.c_str());
        for (const char* c : kChannels) {
            const ChannelMetrics& m = row.at(c);
            std::fprintf(f, ",%.12g,%.12g", m.rmse, m.percent);
        }
        std::fprintf(f, "\n");
    }
    std::fprintf(f, "normalizers");
    for (const char* c : kChannels)
        std::fprintf(f, ",%.12g,", report.normalizers.at(c));
    std::fprintf(f, "\n");
    std::fclose(f);
}

std::vector<TrackErrorRecord> error_along_track(
    const std::vector<StateEstimate>& estimates,
    const std::vector<GroundTruthState>& truth, int warmup_frames) {
    if (estimates.size() != truth.size())
        throw LengthMismatchError("estimates and truth differ in length");
    std::vector<TrackErrorRecord> out;
    for (std::size_t i = static_cast<std::size_t>(std::max(0, warmup_frames));
         i < truth.size(); ++i)
        out.push_back({truth[i].x, truth[i].y, std::abs(estimates[i].vy - truth[i].vy)});
    return out;
}

void write_track_errors_csv(const std::vector<TrackErrorRecord>& records,
                            const std::string& path) {
    std::vector<std::vector<double>> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back({r.x, r.y, r.vy_abs_error});
    write_csv(path, {"x", "y", "vy_abs_error"}, rows);
}

std::string case_name(CaseId id) {
    switch (id) {
        case CaseId::bias_calibration: return "bias_calibration";
        case CaseId::launch: return "launch";
        case CaseId::high_slip: return "high_slip";
        case CaseId::outlier: return "outlier";
    }
    throw std::invalid_argument("bad case id");
}

CaseId case_from_name(const std::string& name) {
    for (CaseId id : {CaseId::bias_calibration, CaseId::launch, CaseId::high_slip,
                      CaseId::outlier})
        if (case_name(id) == name) return id;
    throw std::invalid_argument("unknown case: " + name);
}

std::string CaseStudyResult::to_text() const {
    std::ostringstream os;
    os << "case " << case_name(id) << ": " << (passed ? "PASS" : "FAIL") << "\n";
    os << "criterion: " << criterion << "\n";
    for (const auto& [k, v] : scalars) os << k << " = " << v << "\n";
    return os.str();
}

namespace {

struct CaseRun {
    Dataset ds;
    ScenarioResult result;
    std::vector<StateEstimate> net_track;
};

CaseRun run_case_scenario(const ScenarioSpec& spec, const GruNetwork& net,
                          const VehicleParams& vehicle) {
    CaseRun run;
    run.result = run_scenario(spec, vehicle);
    run.ds = make_dataset(run.result, scenario_name(spec.kind));
    run.net_track = predict_stream(net, run.ds.frames);
    return run;
}

double window_rmse(const std::vector<double>& a, const std::vector<double>& b,
                   const std::vector<bool>& sel) {
    std::vector<double> pa, pb;
    for (std::size_t i = 0; i < sel.size(); ++i)
        if (sel[i]) {
            pa.push_back(a[i]);
            pb.push_back(b[i]);
        }
    return rmse(pa, pb);
}

}  // namespace

CaseStudyResult run_case_study(CaseId id, const GruNetwork& net, const MkfConfig& cfg,
                               const VehicleParams& vehicle, uint64_t seed) {
    CaseStudyResult res;
    res.id = id;
    constexpr int kWarmupFrames = 200;

    if (id == CaseId::bias_calibration) {
        ScenarioSpec spec;
        spec.kind = ScenarioKind::standstill;
        spec.duration = 16.0;
        spec.seed = seed;
        SensorFaultPlan plan;
        plan.imu1_bias = {0.2, 0.2, 0.005};
        plan.imu2_bias = {0.25, -0.2, -0.005};
        spec.plan_override = plan;
        CaseRun run = run_case_scenario(spec, net, vehicle);

        auto states = run_filter(run.ds.frames, FilterMode::reference, cfg);
        // window: 10 s after the calibration prefix
        double t0 = run.ds.frames.front().t + cfg.calib_window + 1.0;
        double mkf_vx = 0, mkf_vy = 0, net_ax = 0, net_ay = 0;
        long n = 0;
        for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
            double t = run.ds.frames[i].t;
            if (t < t0 || t > t0 + 10.0) continue;
            mkf_vx += states[i].mean(0);
            mkf_vy += states[i].mean(1);
            net_ax += run.net_track[i].ax;
            net_ay += run.net_track[i].ay;
            ++n;
        }
        mkf_vx /= static_cast<double>(n);
        mkf_vy /= static_cast<double>(n);
        net_ax /= static_cast<double>(n);
        net_ay /= static_cast<double>(n);
        double drift = std::hypot(mkf_vx, mkf_vy);
        double net_mean = std::max(std::abs(net_ax), std::abs(net_ay));

        res.criterion =
            "network standstill accel |mean| < 0.05 m/s^2 despite 0.2 m/s^2 bias; "
            "reference velocity |mean| < 0.01 m/s over 10 s";
        res.scalars["injected_bias"] = plan.imu1_bias[0];
        res.scalars["mkf_velocity_drift"] = drift;
        res.scalars["net_accel_mean_ax"] = net_ax;
        res.scalars["net_accel_mean_ay"] = net_ay;
        res.scalars["net_accel_mean_abs"] = net_mean;
        res.passed = net_mean < 0.05 && drift < 0.01;

        for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
            res.t.push_back(run.ds.frames[i].t);
            res.series["mkf_vx"].push_back(states[i].mean(0));
            res.series["mkf_vy"].push_back(states[i].mean(1));
            res.series["net_ax"].push_back(run.net_track[i].ax);
            res.series["net_ay"].push_back(run.net_track[i].ay);
        }
        return res;
    }

    if (id == CaseId::launch) {
        ScenarioSpec spec;
        spec.kind = ScenarioKind::launch;
        spec.duration = 25.0;
        spec.seed = seed;
        CaseRun run = run_case_scenario(spec, net, vehicle);
        auto ref = run_filter(run.ds.frames, FilterMode::reference, cfg);

        // slip phase: true slip ratio of any wheel beyond 5%
        VehicleParams params = vehicle;
        double grip = surface_grip(spec.surface);
        params.tire_long.d *= grip;
        params.tire_lat.d *= grip;
        std::vector<bool> sel(run.ds.frames.size(), false);
        std::vector<double> truth_vx(run.ds.frames.size()), net_vx(run.ds.frames.size()),
            ref_vx(run.ds.frames.size());
        for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
            const GroundTruthState& s = run.ds.ground_truth[i];
            const Controls& u = run.result.trajectory[i].controls;
            double max_sr = 0;
            for (int w = 0; w < 4; ++w)
                max_sr = std::max(max_sr,
                                  std::abs(wheel_slip(s, params, w, u.steering).slip_ratio));
            sel[i] = i >= kWarmupFrames && max_sr >= 0.05;
            truth_vx[i] = s.vx;
            net_vx[i] = run.net_track[i].vx;
            ref_vx[i] = ref[i].mean(0);
        }
        double net_rmse = window_rmse(net_vx, truth_vx, sel);
        double ref_rmse = window_rmse(ref_vx, truth_vx, sel);

        res.criterion = "network vx RMSE over the slip phase <= 2x reference MKF vx RMSE";
        res.scalars["slip_frames"] =
            static_cast<double>(std::count(sel.begin(), sel.end(), true));
        res.scalars["max_slip_ratio"] = run.result.max_abs_slip_ratio;
        res.scalars["net_vx_rmse"] = net_rmse;
        res.scalars["ref_vx_rmse"] = ref_rmse;
        res.passed = net_rmse <= 2.0 * ref_rmse;

        for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
            res.t.push_back(run.ds.frames[i].t);
            res.series["truth_vx"].push_back(truth_vx[i]);
            res.series["net_vx"].push_back(net_vx[i]);
            res.series["ref_vx"].push_back(ref_vx[i]);
            res.series["slip_phase"].push_back(sel[i] ? 1.0 : 0.0);
        }
        return res;
    }

    if (id == CaseId::high_slip) {
        ScenarioSpec spec;
        spec.kind = ScenarioKind::high_slip_corner;
        spec.duration = 40.0;
        spec.seed = seed;
        CaseRun run = run_case_scenario(spec, net, vehicle);
        auto base = run_filter(run.ds.frames, FilterMode::baseline, cfg);

        std::vector<double> truth_vy, net_vy, base_vy;
        for (std::size_t i = kWarmupFrames; i < run.ds.frames.size(); ++i) {
            truth_vy.push_back(run.ds.ground_truth[i].vy);
            net_vy.push_back(run.net_track[i].vy);
            base_vy.push_back(base[i].mean(1));
        }
        double net_rmse = rmse(net_vy, truth_vy);
        double base_rmse = rmse(base_vy, truth_vy);

        res.criterion = "network vy RMSE on the maneuver <= 1/3 of baseline vy RMSE";
        res.scalars["max_rear_sideslip_deg"] =
            run.result.max_rear_sideslip * 180.0 / M_PI;
        res.scalars["net_vy_rmse"] = net_rmse;
        res.scalars["baseline_vy_rmse"] = base_rmse;
        res.passed = net_rmse <= base_rmse / 3.0;

        for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
            res.t.push_back(run.ds.frames[i].t);
            res.series["truth_vy"].push_back(run.ds.ground_truth[i].vy);
            res.series["net_vy"].push_back(run.net_track[i].vy);
            res.series["baseline_vy"].push_back(base[i].mean(1));
        }
        return res;
    }

    // outlier: IMU-2 freezes mid-run
    ScenarioSpec spec;
    spec.kind = ScenarioKind::imu_freeze_lap;
    spec.duration = 80.0;
    spec.seed = seed;
    CaseRun run = run_case_scenario(spec, net, vehicle);
    auto mkf = run_filter(run.ds.frames, FilterMode::baseline, cfg);
    const double t_freeze = run.result.plan.freeze_events.at(0).t_start;

    std::vector<double> truth_ay, net_ay, mkf_ay;
    std::vector<bool> pre, post;
    for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
        double t = run.ds.frames[i].t;
        truth_ay.push_back(run.ds.ground_truth[i].ay);
        net_ay.push_back(run.net_track[i].ay);
        mkf_ay.push_back(mkf[i].mean(4));
        pre.push_back(i >= kWarmupFrames && t < t_freeze);
        post.push_back(t >= t_freeze);
    }
    double net_pre = window_rmse(net_ay, truth_ay, pre);
    double net_post = window_rmse(net_ay, truth_ay, post);
    double mkf_pre = window_rmse(mkf_ay, truth_ay, pre);
    double mkf_post = window_rmse(mkf_ay, truth_ay, post);

    res.criterion =
        "after the IMU-2 freeze, ay RMSE <= 2x its pre-freeze value for both the "
        "filter and the network";
    res.scalars["t_freeze"] = t_freeze;
    res.scalars["net_ay_rmse_pre"] = net_pre;
    res.scalars["net_ay_rmse_post"] = net_post;
    res.scalars["mkf_ay_rmse_pre"] = mkf_pre;
    res.scalars["mkf_ay_rmse_post"] = mkf_post;
    res.passed = net_post <= 2.0 * net_pre && mkf_post <= 2.0 * mkf_pre;

    for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
        res.t.push_back(run.ds.frames[i].t);
        res.series["truth_ay"].push_back(truth_ay[i]);
        res.series["net_ay"].push_back(net_ay[i]);
        res.series["mkf_ay"].push_back(mkf_ay[i]);
    }
    return res;
}

}  // namespace velest
