#include "velest/mkf.hpp"

#include <cmath>
#include <stdexcept>

#include "velest/common.hpp"
#include "velest/config.hpp"

namespace velest {

namespace {

Matrix5d process_noise(const NoiseConfig& n) {
    Vector5d q;
    q << n.q_v, n.q_v, n.q_r, n.q_a, n.q_a;
    return q.asDiagonal();
}

void check_finite(const FilterState& fs) {
    if (!fs.mean.allFinite() || !fs.cov.allFinite())
        throw NonFiniteError("filter state not finite");
}

// symmetric PSD check with a small negative tolerance; the covariance
// may be legitimately singular (pinned variances)
void check_psd(const Matrix5d& P) {
    Eigen::LDLT<Matrix5d> ldlt(P);
    if (ldlt.info() != Eigen::Success)
        throw CovarianceNotPdError("covariance factorization failed");
    if ((ldlt.vectorD().array() < -1e-9).any())
        throw CovarianceNotPdError("covariance has a negative eigenvalue");
}

// S with S S^T = P, valid for singular PSD matrices
Matrix5d psd_sqrt(const Matrix5d& P) {
    Eigen::LDLT<Matrix5d> ldlt(P);
    if (ldlt.info() != Eigen::Success)
        throw CovarianceNotPdError("covariance factorization failed");
    Vector5d d = ldlt.vectorD();
    for (int i = 0; i < 5; ++i) {
        if (d(i) < -1e-9) throw CovarianceNotPdError("covariance has a negative eigenvalue");
        d(i) = std::sqrt(std::max(d(i), 0.0));
    }
    Matrix5d L = ldlt.matrixL();
    return ldlt.transpositionsP().transpose() * (L * d.asDiagonal()).eval();
}

struct Unscented {
    Eigen::Matrix<double, 5, 11> sigma;
    double wm0, wc0, wi;
};

Unscented sigma_points(const Vector5d& x, const Matrix5d& P, const NoiseConfig& n) {
    const double nd = 5.0;
    const double lambda = n.ukf_alpha * n.ukf_alpha * (nd + n.ukf_kappa) - nd;
    const double c = nd + lambda;
    Matrix5d S = psd_sqrt(P);
    Unscented u;
    u.sigma.col(0) = x;
    const double gamma = std::sqrt(c);
    for (int i = 0; i < 5; ++i) {
        u.sigma.col(1 + i) = x + gamma * S.col(i);
        u.sigma.col(6 + i) = x - gamma * S.col(i);
    }
    u.wm0 = lambda / c;
    u.wc0 = lambda / c + (1.0 - n.ukf_alpha * n.ukf_alpha + n.ukf_beta);
    u.wi = 0.5 / c;
    return u;
}

template <class H>
UpdateResult ukf_update2(const FilterState& in, const Eigen::Vector2d& z,
                         const Eigen::Matrix2d& R, H&& h, const NoiseConfig& noise) {
    Unscented u = sigma_points(in.mean, in.cov, noise);

    Eigen::Matrix<double, 2, 11> Z;
    for (int j = 0; j < 11; ++j) Z.col(j) = h(Vector5d(u.sigma.col(j)));

    Eigen::Vector2d zhat = u.wm0 * Z.col(0);
    for (int j = 1; j < 11; ++j) zhat += u.wi * Z.col(j);

    Eigen::Matrix2d Pzz = R;
    Eigen::Matrix<double, 5, 2> Pxz = Eigen::Matrix<double, 5, 2>::Zero();
    {
        Eigen::Vector2d dz = Z.col(0) - zhat;
        Pzz += u.wc0 * dz * dz.transpose();
        Pxz += u.wc0 * (u.sigma.col(0) - in.mean) * dz.transpose();
    }
    for (int j = 1; j < 11; ++j) {
        Eigen::Vector2d dz = Z.col(j) - zhat;
        Pzz += u.wi * dz * dz.transpose();
        Pxz += u.wi * (u.sigma.col(j) - in.mean) * dz.transpose();
    }

    Eigen::Vector2d nu = z - zhat;
    Eigen::Matrix2d Pzz_inv = Pzz.inverse();
    double d2 = nu.dot(Pzz_inv * nu);
    if (d2 > kChi2Gate2d) return {in, UpdateStatus::gate_rejected, d2};

    Eigen::Matrix<double, 5, 2> K = Pxz * Pzz_inv;
    UpdateResult out{in, UpdateStatus::applied, d2};
    out.state.mean = in.mean + K * nu;
    Matrix5d P = in.cov - K * Pzz * K.transpose();
    out.state.cov = 0.5 * (P + P.transpose());
    check_finite(out.state);
    check_psd(out.state.cov);
    return out;
}

}  // namespace

FilterState ekf_propagate(const FilterState& in, double dt, const NoiseConfig& noise) {
    if (!(dt > 0.0) || dt > 0.1) throw std::invalid_argument("bad propagation step");
    const double vx = in.mean(0), vy = in.mean(1), r = in.mean(2);
    const double ax = in.mean(3), ay = in.mean(4);

    FilterState out = in;
    out.mean(0) = vx + dt * (ax + vy * r);
    out.mean(1) = vy + dt * (ay - vx * r);
    out.time = in.time + dt;

    Matrix5d F = Matrix5d::Identity();
    F(0, 1) = dt * r;
    F(0, 2) = dt * vy;
    F(0, 3) = dt;
    F(1, 0) = -dt * r;
    F(1, 2) = -dt * vx;
    F(1, 4) = dt;

    Matrix5d P = F * in.cov * F.transpose() + process_noise(noise) * dt;
    out.cov = 0.5 * (P + P.transpose());
    check_finite(out);
    if (Eigen::LLT<Matrix5d>(out.cov).info() != Eigen::Success)
        throw CovarianceNotPdError("propagated covariance not positive definite");
    return out;
}

UpdateResult lkf_update_imu(const FilterState& in, int imu_id, double ax_raw,
                            double ay_raw, double gz_raw, const NoiseConfig& noise) {
    if (imu_id < 0 || imu_id > 1) throw std::invalid_argument("imu_id must be 0 or 1");
    const auto& b = in.imu_bias[static_cast<std::size_t>(imu_id)];
    Eigen::Vector3d z(ax_raw - b[0], ay_raw - b[1], gz_raw - b[2]);

    Eigen::Matrix<double, 3, 5> H = Eigen::Matrix<double, 3, 5>::Zero();
    H(0, 3) = 1.0;
    H(1, 4) = 1.0;
    H(2, 2) = 1.0;
    Eigen::Matrix3d R = Eigen::Vector3d(noise.r_accel, noise.r_accel, noise.r_gyro)
                            .asDiagonal();

    Eigen::Vector3d nu = z - H * in.mean;
    Eigen::Matrix3d S = H * in.cov * H.transpose() + R;
    Eigen::Matrix3d S_inv = S.inverse();
    double d2 = nu.dot(S_inv * nu);
    if (d2 > kChi2Gate3d) return {in, UpdateStatus::gate_rejected, d2};

    Eigen::Matrix<double, 5, 3> K = in.cov * H.transpose() * S_inv;
    UpdateResult out{in, UpdateStatus::applied, d2};
    out.state.mean = in.mean + K * nu;
    Matrix5d IKH = Matrix5d::Identity() - K * H;
    Matrix5d P = IKH * in.cov * IKH.transpose() + K * R * K.transpose();
    out.state.cov = 0.5 * (P + P.transpose());
    check_finite(out.state);
    check_psd(out.state.cov);
    return out;
}

Eigen::Vector2d wheel_velocity(const WheelObservation& obs, int wheel) {
    if (wheel < 0 || wheel > 3) throw std::invalid_argument("wheel index out of range");
    const auto w = static_cast<std::size_t>(wheel);
    double sr = slip_ratio_from_torque(obs.torque[w], obs.sr_gain, obs.sr_max);
    double speed = obs.omega[w] * obs.radius[w] / (sr + 1.0);
    double delta = wheel < 2 ? obs.steering : 0.0;
    return {speed * std::cos(delta), speed * std::sin(delta)};
}

int select_min_slip_wheel(const WheelObservation& obs) {
    int best = 0;
    double best_sr = std::abs(slip_ratio_from_torque(obs.torque[0], obs.sr_gain, obs.sr_max));
    for (int w = 1; w < 4; ++w) {
        double sr = std::abs(slip_ratio_from_torque(obs.torque[static_cast<std::size_t>(w)],
                                                    obs.sr_gain, obs.sr_max));
        if (sr < best_sr) {
            best_sr = sr;
            best = w;
        }
    }
    return best;
}

UpdateResult ukf_update_velocity(const FilterState& in, const WheelObservation& obs,
                                 const NoiseConfig& noise) {
    int w = select_min_slip_wheel(obs);
    Eigen::Vector2d z = wheel_velocity(obs, w);
    const Vec2 p = obs.wheel_pos[static_cast<std::size_t>(w)];
    Eigen::Matrix2d R = Eigen::Vector2d(noise.r_wheel_vx, noise.r_wheel_vy).asDiagonal();
    return ukf_update2(
        in, z, R,
        [&p](const Vector5d& x) {
            return Eigen::Vector2d(x(0) - x(2) * p.y, x(1) + x(2) * p.x);
        },
        noise);
}

UpdateResult ukf_update_external_velocity(const FilterState& in,
                                          const Eigen::Vector2d& v_meas,
                                          const Vec2& sensor_pos, double variance,
                                          const NoiseConfig& noise) {
    Eigen::Matrix2d R = variance * Eigen::Matrix2d::Identity();
    return ukf_update2(
        in, v_meas, R,
        [&sensor_pos](const Vector5d& x) {
            return Eigen::Vector2d(x(0) - x(2) * sensor_pos.y,
                                   x(1) + x(2) * sensor_pos.x);
        },
        noise);
}

std::array<std::array<double, 3>, 2> calibrate_standstill(
    const std::vector<SensorFrame>& frames, double window_s) {
    if (window_s < 1.0) throw WindowTooShortError("calibration window under 1 s");
    if (frames.empty()) throw WindowTooShortError("no frames to calibrate on");
    const double t_end = frames.front().t + window_s;
    std::array<std::array<double, 3>, 2> sum{};
    long n = 0;
    for (const auto& f : frames) {
        if (f.t > t_end + 1e-9) break;
        sum[0][0] += f.imu1_ax;
        sum[0][1] += f.imu1_ay;
        sum[0][2] += f.imu1_gz;
        sum[1][0] += f.imu2_ax;
        sum[1][1] += f.imu2_ay;
        sum[1][2] += f.imu2_gz;
        ++n;
    }
    if (n < 2) throw WindowTooShortError("calibration window spans under two frames");
    for (auto& imu : sum)
        for (auto& v : imu) v /= static_cast<double>(n);
    return sum;
}

namespace {

// a channel repeating the exact same value for longer than the timeout
// has stopped updating and gets skipped
struct StaleTracker {
    std::vector<double> last;
    double t_change = 0.0;
    bool seen = false;

    bool fresh(double t, std::initializer_list<double> values, double timeout) {
        std::vector<double> cur(values);
        if (!seen || cur != last) {
            last = std::move(cur);
            t_change = t;
            seen = true;
            return true;
        }
        return (t - t_change) <= timeout + 1e-12;
    }
};

}  // namespace

std::vector<FilterState> run_filter(const std::vector<SensorFrame>& frames,
                                    FilterMode mode, const MkfConfig& cfg) {
    if (frames.size() < 2) throw std::invalid_argument("stream too short to filter");

    FilterState fs;
    fs.imu_bias = calibrate_standstill(frames, cfg.calib_window);
    fs.cov = cfg.initial_variance.asDiagonal();
    fs.time = frames.front().t;

    StaleTracker imu1_tr, imu2_tr, wheels_tr, ext_tr;
    std::vector<FilterState> out;
    out.reserve(frames.size());

    for (std::size_t k = 0; k < frames.size(); ++k) {
        const SensorFrame& f = frames[k];
        if (k > 0) fs = ekf_propagate(fs, f.t - frames[k - 1].t, cfg.noise);

        if (imu1_tr.fresh(f.t, {f.imu1_ax, f.imu1_ay, f.imu1_gz}, cfg.noise.stale_timeout))
            fs = lkf_update_imu(fs, 0, f.imu1_ax, f.imu1_ay, f.imu1_gz, cfg.noise).state;
        if (imu2_tr.fresh(f.t, {f.imu2_ax, f.imu2_ay, f.imu2_gz}, cfg.noise.stale_timeout))
            fs = lkf_update_imu(fs, 1, f.imu2_ax, f.imu2_ay, f.imu2_gz, cfg.noise).state;

        if (wheels_tr.fresh(f.t, {f.wheel_omega[0], f.wheel_omega[1], f.wheel_omega[2],
                                  f.wheel_omega[3]},
                            cfg.noise.stale_timeout)) {
            WheelObservation obs;
            obs.omega = f.wheel_omega;
            obs.torque = {0.5 * f.tq_f, 0.5 * f.tq_f, 0.5 * f.tq_r, 0.5 * f.tq_r};
            obs.steering = f.steering;
            obs.wheel_pos = cfg.vehicle.wheel_pos;
            obs.radius = cfg.vehicle.wheel_radius;
            obs.sr_gain = cfg.vehicle.torque_to_slip_gain;
            obs.sr_max = cfg.vehicle.sr_max;
            fs = ukf_update_velocity(fs, obs, cfg.noise).state;
        }

        if (mode == FilterMode::reference && f.has_ext &&
            ext_tr.fresh(f.t, {f.ext_vx, f.ext_vy}, cfg.noise.stale_timeout))
            fs = ukf_update_external_velocity(fs, {f.ext_vx, f.ext_vy},
                                              cfg.ext_sensor_pos, cfg.noise.r_ext_vel,
                                              cfg.noise)
                     .state;

        fs.time = f.t;
        out.push_back(fs);
    }
    return out;
}

MkfConfig MkfConfig::load(const std::string& path) {
    KeyValueConfig kv = KeyValueConfig::load(path);
    MkfConfig c;
    std::string mode = kv.get_string("mode", "baseline");
    if (mode == "baseline")
        c.mode = FilterMode::baseline;
    else if (mode == "reference")
        c.mode = FilterMode::reference;
    else
        throw std::invalid_argument("mode must be baseline or reference");

    c.dt = kv.get_double("dt", c.dt);
    c.calib_window = kv.get_double("calib_window", c.calib_window);
    c.ext_sensor_pos.x = kv.get_double("ext_pos_x", c.ext_sensor_pos.x);
    c.ext_sensor_pos.y = kv.get_double("ext_pos_y", c.ext_sensor_pos.y);

    NoiseConfig& n = c.noise;
    n.q_v = kv.get_double("q_v", n.q_v);
    n.q_r = kv.get_double("q_r", n.q_r);
    n.q_a = kv.get_double("q_a", n.q_a);
    n.r_accel = kv.get_double("r_accel", n.r_accel);
    n.r_gyro = kv.get_double("r_gyro", n.r_gyro);
    n.r_wheel_vx = kv.get_double("r_wheel_vx", n.r_wheel_vx);
    n.r_wheel_vy = kv.get_double("r_wheel_vy", n.r_wheel_vy);
    n.r_ext_vel = kv.get_double("r_ext_vel", n.r_ext_vel);
    n.ukf_alpha = kv.get_double("ukf_alpha", n.ukf_alpha);
    n.ukf_beta = kv.get_double("ukf_beta", n.ukf_beta);
    n.ukf_kappa = kv.get_double("ukf_kappa", n.ukf_kappa);
    n.stale_timeout = kv.get_double("stale_timeout", n.stale_timeout);

    for (int i = 0; i < 5; ++i)
        c.initial_variance(i) =
            kv.get_double("init_var_" + std::to_string(i), c.initial_variance(i));
    for (int w = 0; w < 4; ++w) {
        auto sw = std::to_string(w);
        auto uw = static_cast<std::size_t>(w);
        c.vehicle.wheel_pos[uw].x = kv.get_double("wheel" + sw + "_x", c.vehicle.wheel_pos[uw].x);
        c.vehicle.wheel_pos[uw].y = kv.get_double("wheel" + sw + "_y", c.vehicle.wheel_pos[uw].y);
        c.vehicle.wheel_radius[uw] = kv.get_double("wheel" + sw + "_r", c.vehicle.wheel_radius[uw]);
    }
    c.vehicle.torque_to_slip_gain = kv.get_double("sr_gain", c.vehicle.torque_to_slip_gain);
    c.vehicle.sr_max = kv.get_double("sr_max", c.vehicle.sr_max);
    return c;
}

void MkfConfig::save(const std::string& path) const {
    KeyValueConfig kv;
    kv.set("mode", mode == FilterMode::baseline ? "baseline" : "reference");
    kv.set("dt", dt);
    kv.set("calib_window", calib_window);
    kv.set("ext_pos_x", ext_sensor_pos.x);
    kv.set("ext_pos_y", ext_sensor_pos.y);
    kv.set("q_v", noise.q_v);
    kv.set("q_r", noise.q_r);
    kv.set("q_a", noise.q_a);
    kv.set("r_accel", noise.r_accel);
    kv.set("r_gyro", noise.r_gyro);
    kv.set("r_wheel_vx", noise.r_wheel_vx);
    kv.set("r_wheel_vy", noise.r_wheel_vy);
    kv.set("r_ext_vel", noise.r_ext_vel);
    kv.set("ukf_alpha", noise.ukf_alpha);
    kv.set("ukf_beta", noise.ukf_beta);
    kv.set("ukf_kappa", noise.ukf_kappa);
    kv.set("stale_timeout", noise.stale_timeout);
    for (int i = 0; i < 5; ++i)
        kv.set("init_var_" + std::to_string(i), initial_variance(i));
    for (int w = 0; w < 4; ++w) {
        auto sw = std::to_string(w);
        auto uw = static_cast<std::size_t>(w);
        kv.set("wheel" + sw + "_x", vehicle.wheel_pos[uw].x);
        kv.set("wheel" + sw + "_y", vehicle.wheel_pos[uw].y);
        kv.set("wheel" + sw + "_r", vehicle.wheel_radius[uw]);
    }
    kv.set("sr_gain", vehicle.torque_to_slip_gain);
    kv.set("sr_max", vehicle.sr_max);
    kv.save(path);
}

}  // namespace velest
