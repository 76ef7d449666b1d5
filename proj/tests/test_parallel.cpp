#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "velest/gru.hpp"

using namespace velest;

namespace {

SequenceExample random_example(int T, int in, int out, int warmup, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    SequenceExample e;
    e.inputs.resize(T, in);
    e.targets.resize(T, out);
    for (long i = 0; i < e.inputs.size(); ++i) e.inputs.data()[i] = g(rng);
    for (long i = 0; i < e.targets.size(); ++i) e.targets.data()[i] = 0.5 * g(rng);
    e.warmup = warmup;
    e.mask_id = seed;
    return e;
}

}  // namespace

TEST_CASE("parallel batch gradients are bit-identical to serial") {
    omp_set_num_threads(4);  // force real worker threads even on one core
    GruNetwork net = GruNetwork::make(13, {12, 8}, 5, 42);
    net.dropout = 0.0;

    // odd batch sizes leave a short trailing slab; all must agree
    for (int n : {1, 7, 8, 9, 16, 20}) {
        std::vector<SequenceExample> batch;
        for (int s = 0; s < n; ++s)
            batch.push_back(random_example(24, 13, 5, 8, 1000 + static_cast<uint64_t>(s)));

        BatchGrad ser = batch_gradient(net, batch, ExecutionPolicy::serial, 9, false);
        BatchGrad par = batch_gradient(net, batch, ExecutionPolicy::openmp, 9, false);
        CHECK(ser.count == par.count);
        CHECK(ser.sse == par.sse);
        CHECK(ser.loss == par.loss);
        CHECK((ser.grad.array() == par.grad.array()).all());
    }
}

TEST_CASE("dropout masks do not depend on the execution policy") {
    omp_set_num_threads(4);
    GruNetwork net = GruNetwork::make(6, {10}, 3, 7);
    net.dropout = 0.25;

    std::vector<SequenceExample> batch;
    for (int s = 0; s < 19; ++s)
        batch.push_back(random_example(16, 6, 3, 4, 2000 + static_cast<uint64_t>(s)));

    BatchGrad ser = batch_gradient(net, batch, ExecutionPolicy::serial, 31, true);
    BatchGrad par = batch_gradient(net, batch, ExecutionPolicy::openmp, 31, true);
    CHECK(ser.loss == par.loss);
    CHECK((ser.grad.array() == par.grad.array()).all());

    // eval-mode loss agrees with the standalone scorer under both policies
    BatchGrad ev = batch_gradient(net, batch, ExecutionPolicy::openmp, 0, false);
    CHECK(ev.loss == masked_rmse(net, batch));
}

TEST_CASE("whole training runs match across policies") {
    omp_set_num_threads(4);
    auto synth = [](uint64_t seed, int n) {
        Dataset ds;
        ds.name = "p" + std::to_string(seed);
        ds.surface = "flat";
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 0.3);
        for (int i = 0; i < n; ++i) {
            double t = 0.005 * static_cast<double>(i);
            SensorFrame f;
            f.t = t;
            f.imu1_ax = std::sin(1.1 * t) + g(rng);
            f.imu1_ay = std::cos(0.9 * t) + g(rng);
            f.imu1_gz = std::sin(1.7 * t) + g(rng);
            f.imu2_ax = std::cos(2.1 * t) + g(rng);
            f.imu2_ay = std::sin(0.6 * t) + g(rng);
            f.imu2_gz = std::cos(1.4 * t) + g(rng);
            for (int w = 0; w < 4; ++w)
                f.wheel_omega[static_cast<std::size_t>(w)] = std::sin(t + w) + g(rng);
            f.tq_f = std::cos(0.8 * t) + g(rng);
            f.tq_r = std::sin(1.3 * t) + g(rng);
            f.steering = std::sin(2.3 * t) + g(rng);
            ds.frames.push_back(f);
            TargetFrame y;
            y.t = t;
            y.vx = 0.6 * f.imu1_ax;
            y.vy = 0.4 * f.imu1_ay;
            y.yaw_rate = 0.5 * f.imu1_gz;
            y.ax = 0.3 * f.imu2_ax;
            y.ay = 0.7 * f.imu2_ay;
            ds.targets.push_back(y);
        }
        return ds;
    };

    TrainConfig cfg;
    cfg.hidden = {5};
    cfg.input_steps = 8;
    cfg.output_steps = 8;
    cfg.stride = 8;
    cfg.batch_size = 12;  // slabs of 8 + 4 inside each batch
    cfg.lr = 1e-3;
    cfg.dropout = 0.1;
    cfg.max_epochs = 6;
    cfg.patience = 6;
    cfg.seed = 11;

    std::vector<Dataset> train = {synth(1, 200), synth(2, 200)};
    std::vector<Dataset> val = {synth(3, 100)};

    cfg.policy = ExecutionPolicy::serial;
    TrainResult a = train_network(train, val, cfg);
    cfg.policy = ExecutionPolicy::openmp;
    TrainResult b = train_network(train, val, cfg);

    CHECK(a.history.train_loss == b.history.train_loss);
    CHECK(a.history.val_loss == b.history.val_loss);
    CHECK(a.history.best_epoch == b.history.best_epoch);
    CHECK((a.net.flatten().array() == b.net.flatten().array()).all());
}
