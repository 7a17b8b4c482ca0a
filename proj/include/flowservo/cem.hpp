#pragma once

#include <cstdint>
#include <functional>

#include "flowservo/control.hpp"
#include "flowservo/predict.hpp"

namespace flowservo {

struct CemConfig {
  int population = 64;
  double elite_fraction = 0.1;
  int iterations = 20;
  double initial_std_linear = 0.02;   // m/s
  double initial_std_angular = 0.02;  // rad/s
  double std_floor = 1e-3;
  /// Keep the previous mean when the refit mean has a higher loss (the std is
  /// refit either way).
  bool monotone = true;

  void validate() const;
  int elite_count() const;
};

struct CemResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  /// Loss of the mean after each iteration.
  std::vector<double> loss_trace;
};

/// Cross-entropy minimization over a box: sample mean + std * N(0, 1) clipped to
/// [-bound, bound], refit mean and std to the lowest-loss elites, floor the std.
/// Deterministic for a given seed.
CemResult cem_minimize(const std::function<double(const Eigen::VectorXd&)>& loss,
                       const Eigen::VectorXd& initial_mean, const Eigen::VectorXd& initial_std,
                       const Eigen::VectorXd& bound, const CemConfig& config, std::uint64_t seed);

/// CEM over T x 6 velocity plans on the flow loss. The search starts from `initial`
/// (T twists) or from the zero plan when `initial` is empty.
PlanResult cem_plan(const HorizonModel& model, const FlowSampleSet& target, const CemConfig& config,
                    std::uint64_t seed, std::size_t horizon = kDefaultHorizon,
                    const VelocityLimits& limits = {}, const VelocityPlan& initial = {});

}  // namespace flowservo
