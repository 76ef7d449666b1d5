#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "velest/common.hpp"
#include "velest/csv.hpp"
#include "velest/gru.hpp"
#include "velest/metrics.hpp"

using namespace velest;

namespace {

// one dataset with hand-picked truth and per-sample estimator offsets
Dataset truth_set(const std::string& name, const std::vector<double>& t,
                  const std::vector<double>& vx) {
    Dataset ds;
    ds.name = name;
    ds.surface = "flat";
    for (std::size_t i = 0; i < t.size(); ++i) {
        SensorFrame f;
        f.t = t[i];
        ds.frames.push_back(f);
        GroundTruthState s;
        s.time = t[i];
        s.vx = vx[i];
        s.vy = 0.5;  // keeps every normalizer positive
        s.yaw_rate = 0.25;
        s.ax = 1.5;
        s.ay = 2.5;
        ds.ground_truth.push_back(s);
    }
    return ds;
}

std::vector<StateEstimate> offset_track(const Dataset& ds,
                                        const std::vector<double>& vx_err) {
    std::vector<StateEstimate> est;
    for (std::size_t i = 0; i < ds.ground_truth.size(); ++i) {
        const GroundTruthState& s = ds.ground_truth[i];
        est.push_back({s.vx + vx_err[i], s.vy, s.yaw_rate, s.ax, s.ay});
    }
    return est;
}

GruNetwork zero_net() {
    GruNetwork net = GruNetwork::make(13, {2}, 5, 1);
    net.unflatten(Eigen::VectorXd::Zero(net.parameter_count()));
    net.norm.in_mean = Eigen::VectorXd::Zero(13);
    net.norm.in_std = Eigen::VectorXd::Ones(13);
    net.norm.out_mean = Eigen::VectorXd::Zero(5);
    net.norm.out_std = Eigen::VectorXd::Ones(5);
    return net;
}

}  // namespace

TEST_CASE("rmse basics") {
    CHECK(rmse({0.0, 0.0}, {3.0, 4.0}) == 3.5355339059327378);
    CHECK(rmse({3.0, 4.0}, {0.0, 0.0}) == 3.5355339059327378);  // symmetric
    CHECK(rmse({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}) == 1.0);
    CHECK(rmse({5.0}, {5.0}) == 0.0);
    CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), LengthMismatchError);
    CHECK_THROWS_AS(rmse({}, {}), std::invalid_argument);
}

TEST_CASE("percent error against the channel peak") {
    CHECK(percent_error(0.141, 15.0) == 0.9399999999999998);
    CHECK(percent_error(0.059, 1.51) == 3.90728476821192);
    CHECK(percent_error(0.0, 3.0) == 0.0);
    CHECK_THROWS_AS(percent_error(0.1, 0.0), ZeroNormalizerError);
    CHECK_THROWS_AS(percent_error(0.1, -2.0), ZeroNormalizerError);
}

TEST_CASE("estimator comparison pools squared errors across datasets") {
    Dataset d1 = truth_set("one", {0.0, 1.0, 2.0, 3.0}, {10.0, 2.0, 4.0, -4.0});
    Dataset d2 = truth_set("two", {0.0, 1.0, 2.0}, {1.0, 3.0, -3.0});

    std::map<std::string, std::vector<std::vector<StateEstimate>>> tracks;
    tracks["a"] = {offset_track(d1, {0.0, 1.0, -1.0, 2.0}),
                   offset_track(d2, {0.0, 2.0, -2.0})};
    tracks["exact"] = {offset_track(d1, {0.0, 0.0, 0.0, 0.0}),
                       offset_track(d2, {0.0, 0.0, 0.0})};

    MetricReport rep = compare_estimators({d1, d2}, tracks, 1.0);

    // warm-up drops the first sample of each set: 5 pooled samples with
    // squared vx errors 1 + 1 + 4 and 4 + 4
    CHECK(rep.rows.at("a").at("vx").rmse == std::sqrt(14.0 / 5.0));
    CHECK(rep.normalizers.at("vx") == 4.0);  // peak |truth| after warm-up
    CHECK(rep.rows.at("a").at("vx").percent ==
          100.0 * std::sqrt(14.0 / 5.0) / 4.0);
    CHECK(rep.rows.at("a").at("vy").rmse == 0.0);
    CHECK(rep.normalizers.at("ay") == 2.5);
    for (const char* c : {"vx", "vy", "yaw_rate", "ax", "ay"}) {
        CHECK(rep.rows.at("exact").at(c).rmse == 0.0);
        CHECK(rep.rows.at("exact").at(c).percent == 0.0);
    }

    std::string text = rep.to_text();
    CHECK(text.find("estimator,vx_rmse,vx_pct,vy_rmse,vy_pct,yaw_rate_rmse,"
                    "yaw_rate_pct,ax_rmse,ax_pct,ay_rmse,ay_pct") == 0);
    CHECK(text.find("\nexact,0.0000,") != std::string::npos);
    CHECK(text.find("normalizers,4.0000") != std::string::npos);

    write_report_csv(rep, "rep.csv");
    std::ifstream f("rep.csv");
    std::string header, row_a;
    std::getline(f, header);
    std::getline(f, row_a);
    CHECK(header ==
          "estimator,vx_rmse,vx_pct,vy_rmse,vy_pct,yaw_rate_rmse,yaw_rate_pct,"
          "ax_rmse,ax_pct,ay_rmse,ay_pct");
    CHECK(row_a.substr(0, 2) == "a,");
    std::remove("rep.csv");
}

TEST_CASE("estimator comparison validates alignment") {
    Dataset d1 = truth_set("one", {0.0, 1.0, 2.0}, {1.0, 2.0, 3.0});
    std::map<std::string, std::vector<std::vector<StateEstimate>>> tracks;

    tracks["a"] = {offset_track(d1, {0.0, 0.0, 0.0}), offset_track(d1, {0.0, 0.0, 0.0})};
    CHECK_THROWS_AS(compare_estimators({d1}, tracks), LengthMismatchError);

    tracks["a"] = {{StateEstimate{}, StateEstimate{}}};  // two of three samples
    CHECK_THROWS_AS(compare_estimators({d1}, tracks), LengthMismatchError);

    tracks["a"] = {offset_track(d1, {0.0, 0.0, 0.0})};
    CHECK_THROWS_AS(compare_estimators({}, {}), std::invalid_argument);
    // a warm-up past the end leaves every normalizer at zero
    CHECK_THROWS_AS(compare_estimators({d1}, tracks, 100.0), ZeroNormalizerError);

    Dataset flat = d1;
    for (auto& s : flat.ground_truth) s.vy = 0.0;
    tracks["a"] = {offset_track(flat, {0.0, 0.0, 0.0})};
    CHECK_THROWS_AS(compare_estimators({flat}, tracks), ZeroNormalizerError);
}

TEST_CASE("track error records start after the warmup frames") {
    std::vector<GroundTruthState> truth(300);
    std::vector<StateEstimate> est(300);
    for (int i = 0; i < 300; ++i) {
        truth[static_cast<std::size_t>(i)].x = 0.5 * i;
        truth[static_cast<std::size_t>(i)].y = -0.25 * i;
        truth[static_cast<std::size_t>(i)].vy = 0.01 * i;
        est[static_cast<std::size_t>(i)].vy = 0.01 * i + (i % 2 ? 0.5 : -0.5);
    }
    std::vector<TrackErrorRecord> rec = error_along_track(est, truth, 200);
    REQUIRE(rec.size() == 100);
    CHECK(rec[0].x == truth[200].x);
    CHECK(rec[0].y == truth[200].y);
    CHECK(rec[0].vy_abs_error == 0.5);

    CHECK(error_along_track(est, truth, 0).size() == 300);
    CHECK(error_along_track(est, truth, -5).size() == 300);
    CHECK(error_along_track(est, truth, 400).empty());
    est.pop_back();
    CHECK_THROWS_AS(error_along_track(est, truth, 0), LengthMismatchError);

    write_track_errors_csv(rec, "trk.csv");
    CsvTable tbl = read_csv("trk.csv");
    CHECK(tbl.columns == std::vector<std::string>{"x", "y", "vy_abs_error"});
    REQUIRE(tbl.rows.size() == 100);
    CHECK(tbl.rows[0][2] == 0.5);
    std::remove("trk.csv");
}

TEST_CASE("case ids map to stable names") {
    for (CaseId id : {CaseId::bias_calibration, CaseId::launch, CaseId::high_slip,
                      CaseId::outlier})
        CHECK(case_from_name(case_name(id)) == id);
    CHECK(case_name(CaseId::outlier) == "outlier");
    CHECK_THROWS_AS(case_from_name("teleport"), std::invalid_argument);
}

TEST_CASE("bias calibration case passes with a quiet network") {
    // an all-zero network predicts zero acceleration, which trivially
    // meets the network half; the filter half is real
    CaseStudyResult res =
        run_case_study(CaseId::bias_calibration, zero_net(), MkfConfig{},
                       VehicleParams{}, 5);
    CHECK(res.id == CaseId::bias_calibration);
    CHECK(res.passed);
    CHECK(res.scalars.at("injected_bias") == 0.2);
    CHECK(res.scalars.at("net_accel_mean_abs") == 0.0);
    CHECK(res.scalars.at("mkf_velocity_drift") < 0.01);
    REQUIRE(!res.t.empty());
    CHECK(res.series.at("mkf_vx").size() == res.t.size());
    CHECK(res.series.at("net_ay").size() == res.t.size());
    CHECK(res.to_text().find("PASS") != std::string::npos);
    CHECK(res.to_text().find("bias_calibration") != std::string::npos);
}

TEST_CASE("launch case fails honestly for a network that predicts nothing") {
    CaseStudyResult res =
        run_case_study(CaseId::launch, zero_net(), MkfConfig{}, VehicleParams{}, 3);
    CHECK(res.id == CaseId::launch);
    CHECK(!res.passed);  // zero vx during a launch is hopeless
    CHECK(res.scalars.at("slip_frames") > 0.0);
    CHECK(res.scalars.at("net_vx_rmse") > 2.0 * res.scalars.at("ref_vx_rmse"));
    CHECK(res.series.at("truth_vx").size() == res.t.size());
    CHECK(res.series.at("slip_phase").size() == res.t.size());
    CHECK(res.to_text().find("FAIL") != std::string::npos);
}
