#pragma once

#include <vector>

#include "flowservo/flow.hpp"
#include "flowservo/geometry.hpp"

namespace flowservo {

inline constexpr std::size_t kDefaultHorizon = 5;

/// Twists for steps t+1 ... t+T.
struct VelocityPlan {
  std::vector<VelocityScrew> twists;

  std::size_t horizon() const { return twists.size(); }
  Vec6 sum() const;
  bool is_finite() const;

  static VelocityPlan zeros(std::size_t horizon);
  /// Plan from a T x 6 row-per-step matrix.
  static VelocityPlan from_matrix(const Eigen::Matrix<double, Eigen::Dynamic, 6>& m);
  Eigen::Matrix<double, Eigen::Dynamic, 6> matrix() const;
};

/// Linearized flow model, frozen over one planning horizon.
struct HorizonModel {
  InteractionMatrix interaction;
  double dt = 0.1;

  void validate() const;
};

/// Generated flow over the horizon: L * (sum of twists) * dt, one sample per row pair.
/// Sample pixel fields are -1; only normalized coordinates are known.
FlowSampleSet generate_flow(const HorizonModel& model, const VelocityPlan& plan);

/// Mean over samples and both components of the squared flow residual.
/// Throws DomainError if the target coordinates do not match the model's.
double flow_loss(const HorizonModel& model, const VelocityPlan& plan, const FlowSampleSet& target);

/// Unnormalized Euclidean norm of the flow residual, reported alongside the loss.
double flow_residual_norm(const HorizonModel& model, const VelocityPlan& plan,
                          const FlowSampleSet& target);

/// d flow_loss / d twists[k], one 6-vector per step. All entries are equal because the
/// loss only depends on the twist sum.
std::vector<Vec6> flow_loss_grad(const HorizonModel& model, const VelocityPlan& plan,
                                 const FlowSampleSet& target);

/// Precomputed quadratic objective in the twist sum s:
///   loss(s) = |A s - b|^2 / m,  A = L dt,  b = target,  m = 2N.
/// Shared by every inner optimizer.
class FlowObjective {
 public:
  FlowObjective(const HorizonModel& model, const FlowSampleSet& target);

  double loss(const Vec6& twist_sum) const;
  /// Gradient with respect to the twist sum (equal to the gradient w.r.t. each step).
  Vec6 gradient(const Vec6& twist_sum) const;
  double loss(const VelocityPlan& plan) const { return loss(plan.sum()); }

  /// Twist sum minimizing the loss (column-pivoted QR on A).
  Vec6 least_squares_sum() const;
  double least_squares_loss() const { return loss(least_squares_sum()); }
  std::size_t sample_count() const { return static_cast<std::size_t>(target_.size() / 2); }

 private:
  Eigen::Matrix<double, Eigen::Dynamic, 6> a_;
  Eigen::VectorXd target_;
};

}  // namespace flowservo
