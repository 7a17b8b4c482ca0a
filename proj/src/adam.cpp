#include "flowservo/adam.hpp"

#include <cmath>

#include "flowservo/error.hpp"

namespace flowservo {

void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, AdamState& state,
                 double learning_rate) {
  if (gradient.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DomainError("adam_update: size mismatch");
  }
  ++state.step;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

double clip_global_norm(Eigen::VectorXd& gradient, double max_norm) {
  const double norm = gradient.norm();
  if (norm > max_norm && norm > 0.0) gradient *= max_norm / norm;
  return norm;
}

}  // namespace flowservo
