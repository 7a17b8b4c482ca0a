#include "flowservo/plan_network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowservo/error.hpp"

namespace flowservo {

void PlanNetwork::init_storage(Eigen::Index parameter_count) {
  params_ = Eigen::VectorXd::Zero(parameter_count);
  adam_ = AdamState(parameter_count);
}

void PlanNetwork::reset() {
  initialize(params_, seed_);
  adam_ = AdamState(params_.size());
}

double PlanNetwork::train_step(const VelocityScrew& previous, const FlowObjective& objective,
                               double learning_rate) {
  Eigen::VectorXd grad;
  const double loss = loss_and_gradient(previous, objective, grad);
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw DivergenceError("training diverged: non-finite loss or gradient");
  }
  clip_global_norm(grad, kClipNorm);
  adam_update(params_, grad, adam_, learning_rate);
  return loss;
}

double PlanNetwork::train_step(const VelocityScrew& previous, const HorizonModel& model,
                               const FlowSampleSet& target, double learning_rate) {
  return train_step(previous, FlowObjective(model, target), learning_rate);
}

PlanResult train_plan(PlanNetwork& net, const VelocityScrew& previous, const FlowObjective& objective,
                      const InnerLoopConfig& config) {
  PlanResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(std::max(config.iterations, 0)));
  double rate = config.learning_rate;
  Eigen::VectorXd kept_params;
  AdamState kept_adam;
  double kept_loss = std::numeric_limits<double>::infinity();
  for (int i = 0; i < config.iterations; ++i) {
    Eigen::VectorXd params = net.parameters();
    AdamState adam = net.optimizer();
    const double loss = net.train_step(previous, objective, rate);
    if (config.monotone && loss > kept_loss) {
      net.parameters() = kept_params;
      net.optimizer() = kept_adam;
      net.optimizer().first_moment.setZero();
      rate *= config.backtrack_factor;
      result.loss_trace.push_back(kept_loss);
    } else {
      if (config.monotone) {
        if (loss < kept_loss) rate = std::min(config.learning_rate, rate * config.regrow_factor);
        kept_params = std::move(params);
        kept_adam = std::move(adam);
        kept_loss = loss;
      }
      result.loss_trace.push_back(loss);
    }
    const auto n = result.loss_trace.size();
    const auto window = static_cast<std::size_t>(config.plateau_window);
    if (config.early_stop && window > 0 && n > window) {
      const double before = result.loss_trace[n - 1 - window];
      const double now = result.loss_trace[n - 1];
      if (before - now <= config.plateau_tolerance * std::abs(before)) break;
    }
  }
  result.plan = net.forward(previous);
  if (config.monotone && !result.loss_trace.empty() && objective.loss(result.plan) > kept_loss) {
    net.parameters() = kept_params;
    net.optimizer() = kept_adam;
    result.plan = net.forward(previous);
  }
  return result;
}

}  // namespace flowservo
