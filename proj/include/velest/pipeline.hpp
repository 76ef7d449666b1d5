#pragma once

#include <string>
#include <vector>

#include "velest/frame.hpp"
#include "velest/mkf.hpp"
#include "velest/scenario.hpp"
#include "velest/types.hpp"

namespace velest {

/// Resamples every channel group to the grid t_k = k / rate by holding
/// the most recent native sample; no interpolation, every output value
/// is some native sample. Throws LeadingGapError when a group starts
/// after the first tick. ext1 fills the optional external-velocity
/// columns; ext2 is left to validation code.
std::vector<SensorFrame> zero_order_hold_sync(const RawSensorStream& stream,
                                              double rate = 200.0);

/// Reference-mode filter pass followed by a non-causal Gaussian
/// smoother (sigma seconds, 3-sigma truncation, boundary
/// renormalization) over each output channel.
std::vector<TargetFrame> generate_target(const std::vector<SensorFrame>& frames,
                                         const MkfConfig& cfg, double sigma = 0.05);

/// Per-channel mean/std over the concatenated training frames.
/// Throws DegenerateChannelError when a channel's std underflows 1e-9.
NormStats compute_norm_stats(const std::vector<Dataset>& train_sets);

enum class Split { train, test, validation };

struct SplitAssignment {
    std::vector<std::string> train, test, validation;
};

/// Deterministic whole-scenario split targeting 11:3:4 proportions
/// (largest remainder), then adjusted so every surface class present in
/// the corpus appears in every split. Needs at least 3 scenarios per
/// surface class. Input order decides priority; no RNG involved.
SplitAssignment build_splits(const std::vector<Dataset>& sets);

/// Synchronized frames + aligned ground truth from one simulated
/// scenario (targets left empty).
Dataset make_dataset(const ScenarioResult& result, const std::string& name);

// --- CSV round trips -------------------------------------------------

void write_dataset_csv(const Dataset& ds, const std::string& frames_path);
void write_target_csv(const Dataset& ds, const std::string& targets_path);
Dataset read_dataset_csv(const std::string& frames_path,
                         const std::string& targets_path = "");

void write_estimates_csv(const std::vector<FilterState>& states,
                         const std::string& path);

void write_scenario_outputs(const ScenarioResult& result, const std::string& out_dir,
                            const std::string& stem);

/// Loads the per-channel-group CSVs written by write_scenario_outputs.
RawSensorStream read_stream_csvs(const std::string& dir, const std::string& stem);
std::vector<GroundTruthState> read_truth_csv(const std::string& path);

}  // namespace velest
