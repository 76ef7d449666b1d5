// Times the batched BPTT kernel under both execution policies and the
// single-stream inference path. Run with OMP_NUM_THREADS to vary the
// parallel width.
#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "velest/common.hpp"
#include "velest/gru.hpp"

using namespace velest;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<SequenceExample> random_batch(int n, int steps, int warmup, int in_dim,
                                          int out_dim, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<SequenceExample> batch(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        SequenceExample& s = batch[static_cast<std::size_t>(i)];
        s.inputs = Eigen::MatrixXd::NullaryExpr(steps, in_dim,
                                                [&] { return dist(rng); });
        s.targets = Eigen::MatrixXd::NullaryExpr(steps, out_dim,
                                                 [&] { return dist(rng); });
        s.warmup = warmup;
        s.mask_id = static_cast<uint64_t>(i);
    }
    return batch;
}

double time_policy(const GruNetwork& net, const std::vector<SequenceExample>& batch,
                   ExecutionPolicy policy, int reps, Eigen::VectorXd* grad_out) {
    BatchGrad g = batch_gradient(net, batch, policy, 42);  // warm caches
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        g = batch_gradient(net, batch, policy, 42);
        best = std::min(best, ms_since(t0));
    }
    if (grad_out) *grad_out = g.grad;
    return best;
}

}  // namespace

int main() {
    const int batch_size = 32, steps = 500, warmup = 300;
    GruNetwork net = GruNetwork::make(kNetworkInputDim, {64}, kNetworkOutputDim, 7);
    net.norm.in_mean = Eigen::VectorXd::Zero(kNetworkInputDim);
    net.norm.in_std = Eigen::VectorXd::Ones(kNetworkInputDim);
    net.norm.out_mean = Eigen::VectorXd::Zero(kNetworkOutputDim);
    net.norm.out_std = Eigen::VectorXd::Ones(kNetworkOutputDim);

    auto batch = random_batch(batch_size, steps, warmup, kNetworkInputDim,
                              kNetworkOutputDim, 99);

    int threads = 1;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    std::printf("BPTT batch: %d seqs x %d steps, hidden 64, %ld params, %d thread(s)\n",
                batch_size, steps, net.parameter_count(), threads);

    Eigen::VectorXd g_serial, g_omp;
    double t_serial = time_policy(net, batch, ExecutionPolicy::serial, 3, &g_serial);
    double t_omp = time_policy(net, batch, ExecutionPolicy::openmp, 3, &g_omp);
    bool identical = (g_serial.array() == g_omp.array()).all();

    std::printf("  serial : %8.2f ms/batch\n", t_serial);
    std::printf("  openmp : %8.2f ms/batch   speedup %.2fx\n", t_omp, t_serial / t_omp);
    std::printf("  gradients bit-identical: %s\n", identical ? "yes" : "NO");

    // streaming inference: one sequence, eval mode, timed per full pass
    std::vector<SensorFrame> frames(steps);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < steps; ++i) {
        SensorFrame& f = frames[static_cast<std::size_t>(i)];
        f.t = 0.005 * i;
        f.imu1_ax = dist(rng); f.imu1_ay = dist(rng); f.imu1_gz = dist(rng);
        f.imu2_ax = dist(rng); f.imu2_ay = dist(rng); f.imu2_gz = dist(rng);
        for (double& w : f.wheel_omega) w = 40.0 + dist(rng);
        f.tq_f = dist(rng); f.tq_r = dist(rng); f.steering = 0.1 * dist(rng);
    }
    auto est = predict_stream(net, frames);  // warm
    double best = 1e300;
    for (int r = 0; r < 5; ++r) {
        auto t0 = Clock::now();
        est = predict_stream(net, frames);
        best = std::min(best, ms_since(t0));
    }
    std::printf("inference: %d steps in %.2f ms (%.1f us/step)\n", steps, best,
                1000.0 * best / steps);
    return identical ? 0 : 1;
}
