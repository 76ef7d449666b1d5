#pragma once

#include <Eigen/Dense>

namespace velest {

/// The five estimated states, in the fixed order used everywhere:
/// [vx, vy, yaw_rate, ax, ay].
struct StateEstimate {
    double vx = 0.0;
    double vy = 0.0;
    double yaw_rate = 0.0;
    double ax = 0.0;
    double ay = 0.0;

    Eigen::Matrix<double, 5, 1> as_vector() const {
        Eigen::Matrix<double, 5, 1> v;
        v << vx, vy, yaw_rate, ax, ay;
        return v;
    }
    static StateEstimate from_vector(const Eigen::Matrix<double, 5, 1>& v) {
        return {v[0], v[1], v[2], v[3], v[4]};
    }
};

/// Per-channel normalization statistics, computed from the training
/// split only (13 input channels, 5 output channels).
struct NormStats {
    Eigen::VectorXd in_mean;   // 13
    Eigen::VectorXd in_std;    // 13
    Eigen::VectorXd out_mean;  // 5
    Eigen::VectorXd out_std;   // 5
};

}  // namespace velest
