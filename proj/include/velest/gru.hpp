#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "velest/frame.hpp"
#include "velest/types.hpp"

namespace velest {

enum class ExecutionPolicy { serial, openmp };

/// One GRU layer. Gate weights act on [x; h] (input stacked over
/// hidden); candidate weights act on [x; r .* h].
struct GruLayerParams {
    Eigen::MatrixXd Wz, Wr, Wh;  // hidden x (in + hidden)
    Eigen::VectorXd bz, br, bh;
};

/// Stacked GRU -> leaky ReLU -> (inverted dropout) -> dense head.
/// flatten()/unflatten() use declared order (Wz,bz,Wr,br,Wh,bh per
/// layer, then Wo,bo), matrices in Eigen's native column-major order;
/// checkpoints share that layout.
struct GruNetwork {
    int input_dim = 0;
    int output_dim = 0;
    std::vector<int> hidden;
    std::vector<GruLayerParams> layers;
    Eigen::MatrixXd Wo;  // output_dim x hidden.back()
    Eigen::VectorXd bo;
    double leak = 0.01;
    double dropout = 0.075;
    NormStats norm;

    long parameter_count() const;
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::VectorXd& theta);

    /// Xavier-uniform weights, zero biases.
    static GruNetwork make(int input_dim, std::vector<int> hidden, int output_dim,
                           uint64_t seed);
};

/// Everything the backward pass needs from one forward run.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> layer_in;      // per layer: T x in
    std::vector<Eigen::MatrixXd> h;             // per layer: (T+1) x hidden, row 0 = h0
    std::vector<Eigen::MatrixXd> z, r, hc;      // per layer: T x hidden
    Eigen::MatrixXd act;                        // T x hidden_top, after leak+dropout
    Eigen::MatrixXd mask;                       // dropout masks (all-ones in eval)
    Eigen::MatrixXd out;                        // T x output_dim
};

/// Runs the net over a whole sequence (rows = timesteps) in normalized
/// space. train_mode draws fresh per-timestep dropout masks from seed.
ForwardCache forward_sequence(const GruNetwork& net, const Eigen::MatrixXd& inputs,
                              bool train_mode, uint64_t mask_seed);

/// One training window, already normalized. Loss covers rows
/// [warmup, T).
struct SequenceExample {
    Eigen::MatrixXd inputs;   // T x input_dim
    Eigen::MatrixXd targets;  // T x output_dim
    int warmup = 0;
    uint64_t mask_id = 0;  // stable id deciding its dropout stream
};

/// sqrt(sum of squared masked errors / count) over a set of sequences.
double masked_rmse(const GruNetwork& net, const std::vector<SequenceExample>& seqs);

struct BatchGrad {
    Eigen::VectorXd grad;  // d(batch RMSE)/d(theta)
    double loss = 0.0;     // batch masked RMSE
    double sse = 0.0;
    long count = 0;
};

/// Full BPTT over a batch. Per-sequence gradients are reduced in index
/// order, so serial and openmp produce bit-identical results.
BatchGrad batch_gradient(const GruNetwork& net,
                         const std::vector<SequenceExample>& batch,
                         ExecutionPolicy policy, uint64_t dropout_seed,
                         bool train_mode = true);

/// Scales grad so its 2-norm is at most max_norm; returns the pre-clip
/// norm.
double clip_global_norm(Eigen::VectorXd& grad, double max_norm);

struct AdamState {
    Eigen::VectorXd m, v;
    long step = 0;
};

void adam_step(Eigen::VectorXd& params, AdamState& state, const Eigen::VectorXd& grad,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct TrainConfig {
    std::vector<int> hidden = {64};
    int input_steps = 300;
    int output_steps = 200;
    int stride = 100;
    int batch_size = 32;
    double lr = 5e-4;
    double clip_norm = 1.0;
    double dropout = 0.075;
    double leak = 0.01;
    int max_epochs = 10000;
    int patience = 25;
    uint64_t seed = 1;
    ExecutionPolicy policy = ExecutionPolicy::serial;

    static TrainConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct TrainHistory {
    std::vector<double> train_loss, val_loss;
    int best_epoch = -1;
};

struct TrainResult {
    GruNetwork net;
    TrainHistory history;
};

/// Cuts overlapping windows from every dataset, trains with Adam +
/// clipping + early stopping (best validation weights restored).
/// Datasets must carry targets; normalization comes from train_sets.
TrainResult train_network(const std::vector<Dataset>& train_sets,
                          const std::vector<Dataset>& val_sets,
                          const TrainConfig& cfg, std::ostream* log = nullptr);

/// With oversample_rare, windows whose loss region is a launch-style
/// ramp (low speed, hard acceleration) or a standstill are emitted as
/// several copies, so the loss stops rounding those regimes away.
std::vector<SequenceExample> make_windows(const Dataset& ds, const TrainConfig& cfg,
                                          const NormStats& stats,
                                          bool oversample_rare = false);

/// Eval-mode pass over an arbitrary-length stream, denormalized.
std::vector<StateEstimate> predict_stream(const GruNetwork& net,
                                          const std::vector<SensorFrame>& frames);

void save_checkpoint(const GruNetwork& net, const std::string& path);
GruNetwork load_checkpoint(const std::string& path);

void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace velest
