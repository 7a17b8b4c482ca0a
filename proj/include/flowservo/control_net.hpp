#pragma once

#include "flowservo/plan_network.hpp"

namespace flowservo {

struct ControlNetConfig {
  int hidden = 32;
  int layers = 5;  // stacked LSTM cells
  std::size_t horizon = kDefaultHorizon;
  std::uint64_t seed = 1;
  /// Start with a zero output projection, so the initial plan is all zeros.
  bool zero_output = false;
  VelocityLimits limits;
};

/// Recurrent velocity generator: input projection, stacked LSTM cells, output
/// projection squashed into the saturation box by v = b * tanh(z / b). Step k's output
/// twist is the input of step k+1; step 1 sees the previous executed twist.
/// Hidden and cell states start at zero on every unroll.
class ControlNet final : public PlanNetwork {
 public:
  explicit ControlNet(const ControlNetConfig& config);

  VelocityPlan forward(const VelocityScrew& previous) const override;
  double loss_and_gradient(const VelocityScrew& previous, const FlowObjective& objective,
                           Eigen::VectorXd& gradient) const override;

  const ControlNetConfig& config() const { return config_; }

 private:
  struct Layout {
    Eigen::Index w_in, b_in;
    std::vector<Eigen::Index> w_cell, b_cell;
    Eigen::Index w_out, b_out, total;
  };
  struct Unroll;

  void initialize(Eigen::VectorXd& params, std::uint64_t seed) const override;
  void run(const VelocityScrew& previous, Unroll& unroll) const;

  ControlNetConfig config_;
  Layout layout_;
};

}  // namespace flowservo
