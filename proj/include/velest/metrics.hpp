#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "velest/frame.hpp"
#include "velest/gru.hpp"
#include "velest/mkf.hpp"
#include "velest/types.hpp"

namespace velest {

double rmse(const std::vector<double>& pred, const std::vector<double>& ref);

/// 100 * rmse / normalizer; normalizer must be positive.
double percent_error(double rmse_value, double normalizer);

struct ChannelMetrics {
    double rmse = 0.0;
    double percent = 0.0;
};

/// Per-estimator rows of a Table-III-style comparison.
struct MetricReport {
    // keyed by estimator name, then channel in {vx, vy, yaw_rate, ay}
    std::map<std::string, std::map<std::string, ChannelMetrics>> rows;
    std::map<std::string, double> normalizers;  // per channel
    double warmup = 1.0;                        // s excluded at sequence start

    std::string to_text() const;
};

/// Compares estimator tracks against simulator ground truth over one or
/// more datasets. Normalizers are the peak |truth| per channel across
/// the evaluated spans.
MetricReport compare_estimators(
    const std::vector<Dataset>& sets,
    const std::map<std::string, std::vector<std::vector<StateEstimate>>>& tracks,
    double warmup_s = 1.0);

void write_report_csv(const MetricReport& report, const std::string& path);

struct TrackErrorRecord {
    double x = 0.0, y = 0.0, vy_abs_error = 0.0;
};

/// Per-position |vy| error records (after warm-up) for error-heat
/// plots; emitted as CSV `x,y,vy_abs_error`.
std::vector<TrackErrorRecord> error_along_track(
    const std::vector<StateEstimate>& estimates,
    const std::vector<GroundTruthState>& truth, int warmup_frames = 200);

void write_track_errors_csv(const std::vector<TrackErrorRecord>& records,
                            const std::string& path);

enum class CaseId { bias_calibration, launch, high_slip, outlier };

std::string case_name(CaseId id);
CaseId case_from_name(const std::string& name);

struct CaseStudyResult {
    CaseId id = CaseId::bias_calibration;
    std::string criterion;
    bool passed = false;
    std::map<std::string, double> scalars;
    // aligned extracts for plotting/inspection
    std::vector<double> t;
    std::map<std::string, std::vector<double>> series;

    std::string to_text() const;
};

/// Generates the case's dedicated scenario, runs the MKF and the
/// trained network on it and checks the case criterion.
CaseStudyResult run_case_study(CaseId id, const GruNetwork& net, const MkfConfig& cfg,
                               const VehicleParams& vehicle, uint64_t seed);

}  // namespace velest
