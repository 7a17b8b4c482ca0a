#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace flowservo {

/// Adaptive-moment optimizer state for a flat parameter vector.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;

  explicit AdamState(Eigen::Index size = 0)
      : first_moment(Eigen::VectorXd::Zero(size)), second_moment(Eigen::VectorXd::Zero(size)) {}
};

/// One bias-corrected Adam step: params -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, AdamState& state,
                 double learning_rate);

/// Rescales `gradient` in place so its norm is at most `max_norm`; returns the original norm.
double clip_global_norm(Eigen::VectorXd& gradient, double max_norm);

}  // namespace flowservo
