#pragma once

#include <cstdint>

#include "flowservo/adam.hpp"
#include "flowservo/control.hpp"
#include "flowservo/predict.hpp"

namespace flowservo {

/// A network mapping the previous executed twist to a T-step velocity plan, trained
/// online on the flow loss with Adam. Parameters live in one flat vector so the
/// optimizer, gradient clipping and finite-difference checks treat every network alike.
class PlanNetwork {
 public:
  static constexpr double kClipNorm = 10.0;

  virtual ~PlanNetwork() = default;

  /// Deterministic unroll; every output lies inside the saturation box.
  virtual VelocityPlan forward(const VelocityScrew& previous) const = 0;

  /// Flow loss of forward(previous) and its gradient with respect to parameters().
  virtual double loss_and_gradient(const VelocityScrew& previous, const FlowObjective& objective,
                                   Eigen::VectorXd& gradient) const = 0;

  /// One training step: gradient, clip to kClipNorm, Adam update. Returns the
  /// pre-update loss. Throws DivergenceError on a non-finite loss or gradient, leaving
  /// the parameters untouched.
  double train_step(const VelocityScrew& previous, const FlowObjective& objective, double learning_rate);
  double train_step(const VelocityScrew& previous, const HorizonModel& model,
                    const FlowSampleSet& target, double learning_rate);

  /// Reinitializes parameters from the construction seed and clears the optimizer.
  void reset();

  std::size_t horizon() const { return horizon_; }
  const VelocityLimits& limits() const { return limits_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }
  const AdamState& optimizer() const { return adam_; }
  AdamState& optimizer() { return adam_; }

 protected:
  PlanNetwork(std::size_t horizon, VelocityLimits limits, std::uint64_t seed)
      : horizon_(horizon), limits_(limits), seed_(seed) {}

  /// Fills params_ from seed_; called by reset() and derived constructors.
  virtual void initialize(Eigen::VectorXd& params, std::uint64_t seed) const = 0;
  void init_storage(Eigen::Index parameter_count);

  std::size_t horizon_;
  VelocityLimits limits_;
  std::uint64_t seed_;
  Eigen::VectorXd params_;
  AdamState adam_;
};

struct InnerLoopConfig {
  int iterations = 100;
  double learning_rate = 1e-2;
  /// Stop once the loss improved by less than this fraction over `plateau_window` iterations.
  bool early_stop = false;
  double plateau_tolerance = 1e-4;
  int plateau_window = 10;
  /// Reject any update that raises the loss: restore the parameters and optimizer
  /// state, drop the momentum and halve the step size. Improving steps let it grow
  /// back toward `learning_rate`.
  bool monotone = true;
  double backtrack_factor = 0.5;
  double regrow_factor = 2.0;
};

/// Trains `net` for up to `config.iterations` steps on a frozen objective and returns the
/// final plan with the per-iteration loss of the accepted parameters.
PlanResult train_plan(PlanNetwork& net, const VelocityScrew& previous, const FlowObjective& objective,
                      const InnerLoopConfig& config);

}  // namespace flowservo
