#include "velest/gru.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "velest/common.hpp"
#include "velest/config.hpp"
#include "velest/csv.hpp"
#include "velest/pipeline.hpp"

namespace velest {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

// sequences per lockstep slab; fixed so serial and openmp runs share
// the exact same reduction structure
constexpr int kChunk = 8;

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

template <class Net, class F>
void for_each_param(Net& net, F&& f) {
    for (auto& L : net.layers) {
        f(L.Wz);
        f(L.bz);
        f(L.Wr);
        f(L.br);
        f(L.Wh);
        f(L.bh);
    }
    f(net.Wo);
    f(net.bo);
}

GruNetwork zeros_like(const GruNetwork& net) {
    GruNetwork g = net;
    for_each_param(g, [](auto& p) { p.setZero(); });
    return g;
}

}  // namespace

long GruNetwork::parameter_count() const {
    long n = 0;
    for_each_param(*this, [&n](const auto& p) { n += p.size(); });
    return n;
}

Eigen::VectorXd GruNetwork::flatten() const {
    Eigen::VectorXd theta(parameter_count());
    long off = 0;
    for_each_param(*this, [&](const auto& p) {
        std::memcpy(theta.data() + off, p.data(), sizeof(double) * static_cast<std::size_t>(p.size()));
        off += p.size();
    });
    return theta;
}

void GruNetwork::unflatten(const Eigen::VectorXd& theta) {
    if (theta.size() != parameter_count())
        throw std::invalid_argument("parameter vector has the wrong length");
    long off = 0;
    for_each_param(*this, [&](auto& p) {
        std::memcpy(p.data(), theta.data() + off, sizeof(double) * static_cast<std::size_t>(p.size()));
        off += p.size();
    });
}

GruNetwork GruNetwork::make(int input_dim, std::vector<int> hidden, int output_dim,
                            uint64_t seed) {
    if (input_dim <= 0 || output_dim <= 0 || hidden.empty())
        throw std::invalid_argument("bad network dimensions");
    for (int h : hidden)
        if (h <= 0) throw std::invalid_argument("bad hidden size");

    GruNetwork net;
    net.input_dim = input_dim;
    net.output_dim = output_dim;
    net.hidden = std::move(hidden);

    int in = input_dim;
    for (int nh : net.hidden) {
        GruLayerParams L;
        L.Wz = Eigen::MatrixXd::Zero(nh, in + nh);
        L.Wr = Eigen::MatrixXd::Zero(nh, in + nh);
        L.Wh = Eigen::MatrixXd::Zero(nh, in + nh);
        L.bz = Eigen::VectorXd::Zero(nh);
        L.br = Eigen::VectorXd::Zero(nh);
        L.bh = Eigen::VectorXd::Zero(nh);
        net.layers.push_back(std::move(L));
        in = nh;
    }
    net.Wo = Eigen::MatrixXd::Zero(output_dim, net.hidden.back());
    net.bo = Eigen::VectorXd::Zero(output_dim);

    std::mt19937_64 rng(mix_seed(seed, 0x11AB));
    for_each_param(net, [&rng](auto& p) {
        if (p.cols() == 1) return;  // biases stay zero
        double limit = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (long i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    });
    return net;
}

namespace {

// One lockstep slab of M equally long sequences. Row t*M + s holds
// sequence s at timestep t.
struct Slab {
    Eigen::MatrixXd in;   // (T*M) x input_dim
    Eigen::MatrixXd tgt;  // (T*M) x output_dim, empty when unused
    int T = 0;
    int M = 0;
    int warmup = 0;
    std::vector<uint64_t> mask_ids;
};

Slab pack_slab(const std::vector<SequenceExample>& seqs, std::size_t begin,
               std::size_t end) {
    Slab s;
    s.M = static_cast<int>(end - begin);
    s.T = static_cast<int>(seqs[begin].inputs.rows());
    s.warmup = seqs[begin].warmup;
    s.in.resize(static_cast<long>(s.T) * s.M, seqs[begin].inputs.cols());
    s.tgt.resize(static_cast<long>(s.T) * s.M, seqs[begin].targets.cols());
    for (std::size_t i = begin; i < end; ++i) {
        const SequenceExample& e = seqs[i];
        if (e.inputs.rows() != s.T || e.warmup != s.warmup)
            throw std::invalid_argument("slab sequences must share length and warmup");
        if (e.targets.rows() != e.inputs.rows())
            throw LengthMismatchError("inputs and targets differ in length");
        s.mask_ids.push_back(e.mask_id);
        const auto m = static_cast<long>(i - begin);
        for (int t = 0; t < s.T; ++t) {
            s.in.row(static_cast<long>(t) * s.M + m) = e.inputs.row(t);
            s.tgt.row(static_cast<long>(t) * s.M + m) = e.targets.row(t);
        }
    }
    return s;
}

ForwardCache slab_forward(const GruNetwork& net, const Eigen::MatrixXd& in, int T,
                          int M, bool train_mode, uint64_t mask_seed,
                          const std::vector<uint64_t>& mask_ids) {
    const auto n_layers = net.layers.size();
    const int n_top = net.hidden.back();
    ForwardCache c;
    c.layer_in.resize(n_layers);
    c.h.resize(n_layers);
    c.z.resize(n_layers);
    c.r.resize(n_layers);
    c.hc.resize(n_layers);

    c.mask.setOnes(static_cast<long>(T) * M, n_top);
    if (train_mode && net.dropout > 0.0) {
        const double keep = 1.0 - net.dropout;
        for (int s = 0; s < M; ++s) {
            std::mt19937_64 rng(mix_seed(mask_seed, mask_ids[static_cast<std::size_t>(s)]));
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < n_top; ++j)
                    c.mask(static_cast<long>(t) * M + s, j) = u(rng) < keep ? 1.0 / keep : 0.0;
        }
    }

    Eigen::MatrixXd x = in;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const GruLayerParams& L = net.layers[l];
        const int nh = net.hidden[l];
        const auto ni = x.cols();
        c.layer_in[l] = x;
        c.h[l].setZero(static_cast<long>(T + 1) * M, nh);
        c.z[l].resize(static_cast<long>(T) * M, nh);
        c.r[l].resize(static_cast<long>(T) * M, nh);
        c.hc[l].resize(static_cast<long>(T) * M, nh);

        auto Wz_in = L.Wz.leftCols(ni), Wz_h = L.Wz.rightCols(nh);
        auto Wr_in = L.Wr.leftCols(ni), Wr_h = L.Wr.rightCols(nh);
        auto Wh_in = L.Wh.leftCols(ni), Wh_h = L.Wh.rightCols(nh);

        for (int t = 0; t < T; ++t) {
            auto X = x.middleRows(static_cast<long>(t) * M, M);
            auto Hp = c.h[l].middleRows(static_cast<long>(t) * M, M);
            auto Z = c.z[l].middleRows(static_cast<long>(t) * M, M);
            auto R = c.r[l].middleRows(static_cast<long>(t) * M, M);
            auto Hc = c.hc[l].middleRows(static_cast<long>(t) * M, M);

            Z = ((X * Wz_in.transpose() + Hp * Wz_h.transpose()).rowwise() +
                 L.bz.transpose())
                    .unaryExpr([](double a) { return sigmoid(a); });
            R = ((X * Wr_in.transpose() + Hp * Wr_h.transpose()).rowwise() +
                 L.br.transpose())
                    .unaryExpr([](double a) { return sigmoid(a); });
            Hc = ((X * Wh_in.transpose() +
                   (R.array() * Hp.array()).matrix() * Wh_h.transpose())
                      .rowwise() +
                  L.bh.transpose())
                     .array()
                     .tanh()
                     .matrix();
            c.h[l].middleRows(static_cast<long>(t + 1) * M, M) =
                (Z.array() * Hp.array() + (1.0 - Z.array()) * Hc.array()).matrix();
        }
        // blocks 1..T of h are exactly the per-timestep outputs in order
        x = c.h[l].bottomRows(static_cast<long>(T) * M);
    }

    const double leak = net.leak;
    c.act = x.unaryExpr([leak](double v) { return v >= 0.0 ? v : leak * v; })
                .cwiseProduct(c.mask);
    c.out = (c.act * net.Wo.transpose()).rowwise() + net.bo.transpose();
    return c;
}

double slab_sse(const ForwardCache& c, const Slab& s, long* count) {
    double sse = 0.0;
    long n = 0;
    for (int t = s.warmup; t < s.T; ++t) {
        auto e = c.out.middleRows(static_cast<long>(t) * s.M, s.M) -
                 s.tgt.middleRows(static_cast<long>(t) * s.M, s.M);
        sse += e.squaredNorm();
        n += e.size();
    }
    if (count) *count = n;
    return sse;
}

// d(SSE)/d(params) for one slab
GruNetwork slab_backward(const GruNetwork& net, const ForwardCache& c, const Slab& s) {
    GruNetwork g = zeros_like(net);
    const int T = s.T, M = s.M;
    const auto n_layers = net.layers.size();

    std::vector<Eigen::MatrixXd> dH(n_layers);  // gradient flowing from t+1
    for (std::size_t l = 0; l < n_layers; ++l) dH[l].setZero(M, net.hidden[l]);

    std::vector<Eigen::MatrixXd> dX(n_layers);  // same-step gradient from above

    for (int t = T - 1; t >= 0; --t) {
        // head
        Eigen::MatrixXd dTop;
        {
            auto rows = [&](const Eigen::MatrixXd& m) {
                return m.middleRows(static_cast<long>(t) * M, M);
            };
            Eigen::MatrixXd dY = Eigen::MatrixXd::Zero(M, net.output_dim);
            if (t >= s.warmup) dY = 2.0 * (rows(c.out) - rows(s.tgt));
            g.Wo.noalias() += dY.transpose() * rows(c.act);
            g.bo += dY.colwise().sum().transpose();
            Eigen::MatrixXd dAct = (dY * net.Wo).cwiseProduct(rows(c.mask));
            // leaky relu acts on the top hidden state
            auto Htop = c.h.back().middleRows(static_cast<long>(t + 1) * M, M);
            const double leak = net.leak;
            dTop = dAct.binaryExpr(Htop, [leak](double d, double h) {
                return h >= 0.0 ? d : leak * d;
            });
        }

        for (auto li = static_cast<long>(n_layers) - 1; li >= 0; --li) {
            const auto l = static_cast<std::size_t>(li);
            const GruLayerParams& L = net.layers[l];
            GruLayerParams& G = g.layers[l];
            const int nh = net.hidden[l];
            const auto ni = c.layer_in[l].cols();

            Eigen::MatrixXd dh = dH[l];
            if (l + 1 == n_layers) dh += dTop;
            else dh += dX[l];

            auto X = c.layer_in[l].middleRows(static_cast<long>(t) * M, M);
            auto Hp = c.h[l].middleRows(static_cast<long>(t) * M, M);
            auto Z = c.z[l].middleRows(static_cast<long>(t) * M, M);
            auto R = c.r[l].middleRows(static_cast<long>(t) * M, M);
            auto Hc = c.hc[l].middleRows(static_cast<long>(t) * M, M);

            auto Wz_in = L.Wz.leftCols(ni), Wz_h = L.Wz.rightCols(nh);
            auto Wr_in = L.Wr.leftCols(ni), Wr_h = L.Wr.rightCols(nh);
            auto Wh_in = L.Wh.leftCols(ni), Wh_h = L.Wh.rightCols(nh);

            Eigen::MatrixXd dZ = dh.cwiseProduct(Hp - Hc);
            Eigen::MatrixXd dAh =
                (dh.array() * (1.0 - Z.array()) * (1.0 - Hc.array().square())).matrix();
            Eigen::MatrixXd Gh = dAh * Wh_h;  // grad of (r .* h_prev)
            Eigen::MatrixXd dR = Gh.cwiseProduct(Hp);
            Eigen::MatrixXd dAz =
                (dZ.array() * Z.array() * (1.0 - Z.array())).matrix();
            Eigen::MatrixXd dAr =
                (dR.array() * R.array() * (1.0 - R.array())).matrix();

            G.Wh.leftCols(ni).noalias() += dAh.transpose() * X;
            G.Wh.rightCols(nh).noalias() += dAh.transpose() * R.cwiseProduct(Hp);
            G.bh += dAh.colwise().sum().transpose();
            G.Wz.leftCols(ni).noalias() += dAz.transpose() * X;
            G.Wz.rightCols(nh).noalias() += dAz.transpose() * Hp;
            G.bz += dAz.colwise().sum().transpose();
            G.Wr.leftCols(ni).noalias() += dAr.transpose() * X;
            G.Wr.rightCols(nh).noalias() += dAr.transpose() * Hp;
            G.br += dAr.colwise().sum().transpose();

            dH[l] = dh.cwiseProduct(Z) + Gh.cwiseProduct(R) + dAz * Wz_h + dAr * Wr_h;
            if (l > 0) dX[l - 1] = dAh * Wh_in + dAz * Wz_in + dAr * Wr_in;
        }
    }
    return g;
}

struct SlabGrad {
    Eigen::VectorXd grad;
    double sse = 0.0;
    long count = 0;
};

SlabGrad slab_gradient(const GruNetwork& net, const std::vector<SequenceExample>& seqs,
                       std::size_t begin, std::size_t end, bool train_mode,
                       uint64_t mask_seed) {
    Slab s = pack_slab(seqs, begin, end);
    ForwardCache c =
        slab_forward(net, s.in, s.T, s.M, train_mode, mask_seed, s.mask_ids);
    SlabGrad out;
    out.sse = slab_sse(c, s, &out.count);
    out.grad = slab_backward(net, c, s).flatten();
    return out;
}

}  // namespace

ForwardCache forward_sequence(const GruNetwork& net, const Eigen::MatrixXd& inputs,
                              bool train_mode, uint64_t mask_seed) {
    if (inputs.cols() != net.input_dim)
        throw std::invalid_argument("input width does not match the network");
    if (inputs.rows() == 0) throw std::invalid_argument("empty sequence");
    return slab_forward(net, inputs, static_cast<int>(inputs.rows()), 1, train_mode,
                        mask_seed, {0});
}

double masked_rmse(const GruNetwork& net, const std::vector<SequenceExample>& seqs) {
    double sse = 0.0;
    long n = 0;
    for (std::size_t b = 0; b < seqs.size(); b += kChunk) {
        std::size_t e = std::min(seqs.size(), b + kChunk);
        Slab s = pack_slab(seqs, b, e);
        ForwardCache c = slab_forward(net, s.in, s.T, s.M, false, 0, s.mask_ids);
        long cnt = 0;
        sse += slab_sse(c, s, &cnt);
        n += cnt;
    }
    if (n == 0) throw ZeroNormalizerError("no loss-bearing timesteps");
    return std::sqrt(sse / static_cast<double>(n));
}

BatchGrad batch_gradient(const GruNetwork& net,
                         const std::vector<SequenceExample>& batch,
                         ExecutionPolicy policy, uint64_t dropout_seed,
                         bool train_mode) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const std::size_t n_slabs = (batch.size() + kChunk - 1) / kChunk;
    std::vector<SlabGrad> parts(n_slabs);

    if (policy == ExecutionPolicy::openmp) {
#pragma omp parallel for schedule(static)
        for (long i = 0; i < static_cast<long>(n_slabs); ++i) {
            const auto b = static_cast<std::size_t>(i) * kChunk;
            parts[static_cast<std::size_t>(i)] = slab_gradient(
                net, batch, b, std::min(batch.size(), b + kChunk), train_mode,
                dropout_seed);
        }
    } else {
        for (std::size_t i = 0; i < n_slabs; ++i) {
            const std::size_t b = i * kChunk;
            parts[i] = slab_gradient(net, batch, b, std::min(batch.size(), b + kChunk),
                                     train_mode, dropout_seed);
        }
    }

    BatchGrad out;
    out.grad.setZero(net.parameter_count());
    for (const SlabGrad& p : parts) {  // fixed reduction order
        out.grad += p.grad;
        out.sse += p.sse;
        out.count += p.count;
    }
    if (out.count == 0) throw ZeroNormalizerError("no loss-bearing timesteps");
    out.loss = std::sqrt(out.sse / static_cast<double>(out.count));
    if (out.loss > 0.0)
        out.grad /= 2.0 * static_cast<double>(out.count) * out.loss;
    else
        out.grad.setZero();
    return out;
}

double clip_global_norm(Eigen::VectorXd& grad, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("max_norm must be positive");
    double n = grad.norm();
    if (n > max_norm) grad *= max_norm / n;
    return n;
}

void adam_step(Eigen::VectorXd& params, AdamState& state, const Eigen::VectorXd& grad,
               double lr, double beta1, double beta2, double eps) {
    if (state.m.size() == 0) {
        state.m.setZero(params.size());
        state.v.setZero(params.size());
    }
    if (grad.size() != params.size() || state.m.size() != params.size())
        throw std::invalid_argument("gradient size mismatch");
    ++state.step;
    state.m = beta1 * state.m + (1.0 - beta1) * grad;
    state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    params -= (lr * (state.m / c1).array() / ((state.v / c2).array().sqrt() + eps))
                  .matrix();
}

namespace {

// Oversampling thresholds for rare regimes. A loss region counts as a
// launch-style ramp when the vehicle is slow yet accelerating hard
// (wheel slip territory), and as standstill when it barely moves.
constexpr double kRampVxBelow = 3.0;    // m/s, min |vx| in the region
constexpr double kRampAxAbove = 2.5;    // m/s^2, max |ax| in the region
constexpr double kStillVelBelow = 0.15; // m/s, max speed in the region
constexpr int kRampCopies = 6;
constexpr int kStillCopies = 2;

}  // namespace

std::vector<SequenceExample> make_windows(const Dataset& ds, const TrainConfig& cfg,
                                          const NormStats& stats,
                                          bool oversample_rare) {
    const long win = cfg.input_steps + cfg.output_steps;
    const auto n = static_cast<long>(ds.frames.size());
    if (n < win)
        throw WindowTooShortError(ds.name + " is shorter than one training window");
    if (ds.targets.size() != ds.frames.size())
        throw LengthMismatchError(ds.name + ": frames and targets differ in length");

    Eigen::ArrayXd in_std = stats.in_std.array();
    Eigen::ArrayXd out_std = stats.out_std.array();

    std::vector<SequenceExample> out;
    for (long start = 0; start + win <= n; start += cfg.stride) {
        SequenceExample e;
        e.warmup = cfg.input_steps;
        e.inputs.resize(win, kNetworkInputDim);
        e.targets.resize(win, kNetworkOutputDim);
        double min_abs_vx = std::numeric_limits<double>::infinity();
        double max_abs_ax = 0.0, max_speed = 0.0;
        for (long k = 0; k < win; ++k) {
            const auto idx = static_cast<std::size_t>(start + k);
            e.inputs.row(k) =
                ((ds.frames[idx].network_inputs() - stats.in_mean).array() / in_std)
                    .matrix()
                    .transpose();
            const TargetFrame& t = ds.targets[idx];
            Eigen::VectorXd y(kNetworkOutputDim);
            y << t.vx, t.vy, t.yaw_rate, t.ax, t.ay;
            e.targets.row(k) =
                ((y - stats.out_mean).array() / out_std).matrix().transpose();
            if (k >= cfg.input_steps) {
                min_abs_vx = std::min(min_abs_vx, std::abs(t.vx));
                max_abs_ax = std::max(max_abs_ax, std::abs(t.ax));
                max_speed = std::max(max_speed, std::hypot(t.vx, t.vy));
            }
        }
        int copies = 1;
        if (oversample_rare) {
            if (min_abs_vx < kRampVxBelow && max_abs_ax > kRampAxAbove)
                copies = kRampCopies;
            else if (max_speed < kStillVelBelow)
                copies = kStillCopies;
        }
        for (int c = 1; c < copies; ++c) out.push_back(e);
        out.push_back(std::move(e));
    }
    return out;
}

TrainResult train_network(const std::vector<Dataset>& train_sets,
                          const std::vector<Dataset>& val_sets, const TrainConfig& cfg,
                          std::ostream* log) {
    NormStats stats = compute_norm_stats(train_sets);

    std::vector<SequenceExample> train_w, val_w;
    for (const Dataset& ds : train_sets) {
        auto w = make_windows(ds, cfg, stats, /*oversample_rare=*/true);
        train_w.insert(train_w.end(), std::make_move_iterator(w.begin()),
                       std::make_move_iterator(w.end()));
    }
    // validation is oversampled identically so early stopping selects
    // for the same objective the optimizer sees
    for (const Dataset& ds : val_sets) {
        auto w = make_windows(ds, cfg, stats, /*oversample_rare=*/true);
        val_w.insert(val_w.end(), std::make_move_iterator(w.begin()),
                     std::make_move_iterator(w.end()));
    }
    if (train_w.empty() || val_w.empty())
        throw WindowTooShortError("not enough data for training windows");
    for (std::size_t i = 0; i < train_w.size(); ++i) train_w[i].mask_id = i;

    GruNetwork net = GruNetwork::make(kNetworkInputDim, cfg.hidden, kNetworkOutputDim,
                                      mix_seed(cfg.seed, 1));
    net.leak = cfg.leak;
    net.dropout = cfg.dropout;
    net.norm = stats;

    Eigen::VectorXd theta = net.flatten();
    AdamState adam;
    TrainHistory hist;
    Eigen::VectorXd best_theta = theta;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_w.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0xE000 + static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const uint64_t mask_seed = mix_seed(cfg.seed, 0xD000 + static_cast<uint64_t>(epoch));

        double sse = 0.0;
        long count = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::vector<SequenceExample> batch;
            batch.reserve(e - b);
            for (std::size_t i = b; i < e; ++i) batch.push_back(train_w[order[i]]);

            net.unflatten(theta);
            BatchGrad bg = batch_gradient(net, batch, cfg.policy, mask_seed, true);
            clip_global_norm(bg.grad, cfg.clip_norm);
            adam_step(theta, adam, bg.grad, cfg.lr);
            sse += bg.sse;
            count += bg.count;
        }
        net.unflatten(theta);
        double train_loss = std::sqrt(sse / static_cast<double>(count));
        double val_loss = masked_rmse(net, val_w);
        hist.train_loss.push_back(train_loss);
        hist.val_loss.push_back(val_loss);

        if (val_loss < best_val) {
            best_val = val_loss;
            best_theta = theta;
            hist.best_epoch = epoch;
        }
        if (log)
            (*log) << "epoch " << epoch << " train " << train_loss << " val " << val_loss
                   << (hist.best_epoch == epoch ? " *" : "") << "\n";
        if (epoch - hist.best_epoch >= cfg.patience) break;
    }

    net.unflatten(best_theta);
    return {std::move(net), std::move(hist)};
}

std::vector<StateEstimate> predict_stream(const GruNetwork& net,
                                          const std::vector<SensorFrame>& frames) {
    if (frames.empty()) return {};
    if (net.norm.in_mean.size() != net.input_dim ||
        net.norm.out_mean.size() != net.output_dim)
        throw std::invalid_argument("network carries no normalization stats");

    Eigen::MatrixXd in(static_cast<long>(frames.size()), net.input_dim);
    for (std::size_t i = 0; i < frames.size(); ++i)
        in.row(static_cast<long>(i)) =
            ((frames[i].network_inputs() - net.norm.in_mean).array() /
             net.norm.in_std.array())
                .matrix()
                .transpose();

    ForwardCache c = forward_sequence(net, in, false, 0);
    std::vector<StateEstimate> out;
    out.reserve(frames.size());
    for (long i = 0; i < c.out.rows(); ++i) {
        Eigen::VectorXd y =
            (net.norm.out_mean.array() +
             net.norm.out_std.array() * c.out.row(i).transpose().array())
                .matrix();
        out.push_back(StateEstimate::from_vector(y));
    }
    return out;
}

// --- checkpoint --------------------------------------------------------

namespace {

void write_vector_line(std::FILE* f, const char* key, const Eigen::VectorXd& v) {
    std::fprintf(f, "%s", key);
    for (long i = 0; i < v.size(); ++i) std::fprintf(f, " %.17g", v(i));
    std::fprintf(f, "\n");
}

Eigen::VectorXd parse_vector(std::istringstream& ss, long n) {
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i)
        if (!(ss >> v(i))) throw std::runtime_error("checkpoint: short vector line");
    return v;
}

}  // namespace

void save_checkpoint(const GruNetwork& net, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "velest-gru 1\n");
    std::fprintf(f, "input %d\n", net.input_dim);
    std::fprintf(f, "output %d\n", net.output_dim);
    std::fprintf(f, "hidden");
    for (int h : net.hidden) std::fprintf(f, " %d", h);
    std::fprintf(f, "\n");
    std::fprintf(f, "leak %.17g\n", net.leak);
    std::fprintf(f, "dropout %.17g\n", net.dropout);
    std::fprintf(f, "gates zrh-sigmoid-tanh\n");
    write_vector_line(f, "norm_in_mean", net.norm.in_mean);
    write_vector_line(f, "norm_in_std", net.norm.in_std);
    write_vector_line(f, "norm_out_mean", net.norm.out_mean);
    write_vector_line(f, "norm_out_std", net.norm.out_std);
    Eigen::VectorXd theta = net.flatten();
    std::fprintf(f, "params %ld\n", static_cast<long>(theta.size()));
    std::fprintf(f, "data\n");
    std::fwrite(theta.data(), sizeof(double), static_cast<std::size_t>(theta.size()), f);
    std::fclose(f);
}

GruNetwork load_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw MissingCheckpointError("no checkpoint at " + path);

    GruNetwork net;
    long declared = -1;
    char line[65536];
    bool in_data = false;
    int input_dim = 0, output_dim = 0;
    std::vector<int> hidden;
    double leak = 0.01, dropout = 0.0;
    NormStats norm;

    while (!in_data && std::fgets(line, sizeof(line), f)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "velest-gru") {
            int version = 0;
            ss >> version;
            if (version != 1) {
                std::fclose(f);
                throw std::runtime_error("checkpoint: unsupported version");
            }
        } else if (key == "input")
            ss >> input_dim;
        else if (key == "output")
            ss >> output_dim;
        else if (key == "hidden") {
            int h;
            while (ss >> h) hidden.push_back(h);
        } else if (key == "leak")
            ss >> leak;
        else if (key == "dropout")
            ss >> dropout;
        else if (key == "gates") {
            std::string tag;
            ss >> tag;
            if (tag != "zrh-sigmoid-tanh") {
                std::fclose(f);
                throw std::runtime_error("checkpoint: unknown gate convention");
            }
        } else if (key == "norm_in_mean")
            norm.in_mean = parse_vector(ss, input_dim);
        else if (key == "norm_in_std")
            norm.in_std = parse_vector(ss, input_dim);
        else if (key == "norm_out_mean")
            norm.out_mean = parse_vector(ss, output_dim);
        else if (key == "norm_out_std")
            norm.out_std = parse_vector(ss, output_dim);
        else if (key == "params")
            ss >> declared;
        else if (key == "data")
            in_data = true;
        else {
            std::fclose(f);
            throw std::runtime_error("checkpoint: unknown key " + key);
        }
    }
    if (!in_data || input_dim <= 0 || output_dim <= 0 || hidden.empty()) {
        std::fclose(f);
        throw std::runtime_error("checkpoint: incomplete header");
    }

    net = GruNetwork::make(input_dim, hidden, output_dim, 0);
    net.leak = leak;
    net.dropout = dropout;
    net.norm = std::move(norm);
    if (declared != net.parameter_count()) {
        std::fclose(f);
        throw std::runtime_error("checkpoint: parameter count mismatch");
    }
    Eigen::VectorXd theta(declared);
    std::size_t got = std::fread(theta.data(), sizeof(double),
                                 static_cast<std::size_t>(declared), f);
    std::fclose(f);
    if (got != static_cast<std::size_t>(declared))
        throw std::runtime_error("checkpoint: truncated parameter block");
    net.unflatten(theta);
    return net;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < history.train_loss.size(); ++i)
        rows.push_back({static_cast<double>(i + 1), history.train_loss[i],
                        history.val_loss[i]});
    write_csv(path, {"epoch", "train_loss", "val_loss"}, rows);
}

TrainConfig TrainConfig::load(const std::string& path) {
    KeyValueConfig kv = KeyValueConfig::load(path);
    TrainConfig c;
    std::string hidden = kv.get_string("hidden", "64");
    c.hidden.clear();
    std::istringstream hs(hidden);
    std::string tok;
    while (std::getline(hs, tok, ','))
        if (!tok.empty()) c.hidden.push_back(std::stoi(tok));
    if (c.hidden.empty()) throw std::invalid_argument("hidden must list layer sizes");

    c.input_steps = static_cast<int>(kv.get_int("input_steps", c.input_steps));
    c.output_steps = static_cast<int>(kv.get_int("output_steps", c.output_steps));
    c.stride = static_cast<int>(kv.get_int("stride", c.stride));
    c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
    c.lr = kv.get_double("lr", c.lr);
    c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
    c.dropout = kv.get_double("dropout", c.dropout);
    c.leak = kv.get_double("leak", c.leak);
    c.max_epochs = static_cast<int>(kv.get_int("max_epochs", c.max_epochs));
    c.patience = static_cast<int>(kv.get_int("patience", c.patience));
    c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<long>(c.seed)));
    std::string pol = kv.get_string("policy", "serial");
    if (pol == "serial")
        c.policy = ExecutionPolicy::serial;
    else if (pol == "openmp")
        c.policy = ExecutionPolicy::openmp;
    else
        throw std::invalid_argument("policy must be serial or openmp");
    return c;
}

void TrainConfig::save(const std::string& path) const {
    KeyValueConfig kv;
    std::string h;
    for (std::size_t i = 0; i < hidden.size(); ++i)
        h += (i ? "," : "") + std::to_string(hidden[i]);
    kv.set("hidden", h);
    kv.set("input_steps", static_cast<long>(input_steps));
    kv.set("output_steps", static_cast<long>(output_steps));
    kv.set("stride", static_cast<long>(stride));
    kv.set("batch_size", static_cast<long>(batch_size));
    kv.set("lr", lr);
    kv.set("clip_norm", clip_norm);
    kv.set("dropout", dropout);
    kv.set("leak", leak);
    kv.set("max_epochs", static_cast<long>(max_epochs));
    kv.set("patience", static_cast<long>(patience));
    kv.set("seed", static_cast<long>(seed));
    kv.set("policy", policy == ExecutionPolicy::serial ? "serial" : "openmp");
    kv.save(path);
}

}  // namespace velest
