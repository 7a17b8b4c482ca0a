#pragma once

#include "flowservo/plan_network.hpp"

namespace flowservo {

struct FeedforwardNetConfig {
  int hidden = 64;
  std::size_t horizon = kDefaultHorizon;
  std::uint64_t seed = 1;
  bool zero_output = false;
  VelocityLimits limits;
};

/// Baseline: two tanh hidden layers mapping the previous twist to a flat T x 6 plan,
/// squashed into the saturation box like ControlNet.
class FeedforwardNet final : public PlanNetwork {
 public:
  explicit FeedforwardNet(const FeedforwardNetConfig& config);

  VelocityPlan forward(const VelocityScrew& previous) const override;
  double loss_and_gradient(const VelocityScrew& previous, const FlowObjective& objective,
                           Eigen::VectorXd& gradient) const override;

 private:
  struct Activations {
    Eigen::VectorXd h1, h2, squashed, v;
  };

  void initialize(Eigen::VectorXd& params, std::uint64_t seed) const override;
  Activations run(const Vec6& input) const;

  FeedforwardNetConfig config_;
  Eigen::Index w1_, b1_, w2_, b2_, w3_, b3_, total_;
};

}  // namespace flowservo
