#include "flowservo/predict.hpp"

#include <Eigen/QR>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

void check_aligned(const HorizonModel& model, const FlowSampleSet& target) {
  const auto& coords = model.interaction.sample_coords;
  if (coords.size() != target.size()) {
    throw DomainError("flow target has " + std::to_string(target.size()) + " samples, model has " +
                      std::to_string(coords.size()));
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!(coords[i] == target.samples[i].coord)) {
      throw DomainError("flow target sample " + std::to_string(i) + " is not aligned with the model");
    }
  }
}

Eigen::VectorXd residual(const HorizonModel& model, const VelocityPlan& plan,
                         const FlowSampleSet& target) {
  model.validate();
  check_aligned(model, target);
  return model.interaction.rows * (plan.sum() * model.dt) - target.displacement_vector();
}

}  // namespace

Vec6 VelocityPlan::sum() const {
  Vec6 s = Vec6::Zero();
  for (const auto& t : twists) s += t.vector();
  return s;
}

bool VelocityPlan::is_finite() const {
  for (const auto& t : twists) {
    if (!t.is_finite()) return false;
  }
  return true;
}

VelocityPlan VelocityPlan::zeros(std::size_t horizon) {
  return {std::vector<VelocityScrew>(horizon)};
}

VelocityPlan VelocityPlan::from_matrix(const Eigen::Matrix<double, Eigen::Dynamic, 6>& m) {
  VelocityPlan p;
  p.twists.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    p.twists.push_back(VelocityScrew::from_vector(m.row(k).transpose()));
  }
  return p;
}

Eigen::Matrix<double, Eigen::Dynamic, 6> VelocityPlan::matrix() const {
  Eigen::Matrix<double, Eigen::Dynamic, 6> m(static_cast<Eigen::Index>(twists.size()), 6);
  for (std::size_t k = 0; k < twists.size(); ++k) {
    m.row(static_cast<Eigen::Index>(k)) = twists[k].vector().transpose();
  }
  return m;
}

void HorizonModel::validate() const {
  if (!(dt > 0.0)) throw DomainError("horizon model: dt must be positive");
  if (interaction.rows.rows() != static_cast<Eigen::Index>(2 * interaction.size()) ||
      interaction.size() == 0) {
    throw DomainError("horizon model: malformed interaction matrix");
  }
}

FlowSampleSet generate_flow(const HorizonModel& model, const VelocityPlan& plan) {
  model.validate();
  const Eigen::VectorXd flow = model.interaction.rows * (plan.sum() * model.dt);
  FlowSampleSet out;
  out.samples.reserve(model.interaction.size());
  for (std::size_t i = 0; i < model.interaction.size(); ++i) {
    FlowSample s;
    s.u = -1;
    s.v = -1;
    s.coord = model.interaction.sample_coords[i];
    s.dx = flow[static_cast<Eigen::Index>(2 * i)];
    s.dy = flow[static_cast<Eigen::Index>(2 * i + 1)];
    out.samples.push_back(s);
  }
  return out;
}

double flow_loss(const HorizonModel& model, const VelocityPlan& plan, const FlowSampleSet& target) {
  const Eigen::VectorXd r = residual(model, plan, target);
  return r.squaredNorm() / static_cast<double>(r.size());
}

double flow_residual_norm(const HorizonModel& model, const VelocityPlan& plan,
                          const FlowSampleSet& target) {
  return residual(model, plan, target).norm();
}

std::vector<Vec6> flow_loss_grad(const HorizonModel& model, const VelocityPlan& plan,
                                 const FlowSampleSet& target) {
  const Eigen::VectorXd r = residual(model, plan, target);
  const Vec6 g = (2.0 * model.dt / static_cast<double>(r.size())) * (model.interaction.rows.transpose() * r);
  return std::vector<Vec6>(plan.horizon(), g);
}

FlowObjective::FlowObjective(const HorizonModel& model, const FlowSampleSet& target) {
  model.validate();
  check_aligned(model, target);
  a_ = model.interaction.rows * model.dt;
  target_ = target.displacement_vector();
}

double FlowObjective::loss(const Vec6& s) const {
  return (a_ * s - target_).squaredNorm() / static_cast<double>(target_.size());
}

Vec6 FlowObjective::gradient(const Vec6& s) const {
  return (2.0 / static_cast<double>(target_.size())) * (a_.transpose() * (a_ * s - target_));
}

Vec6 FlowObjective::least_squares_sum() const {
  return a_.colPivHouseholderQr().solve(target_);
}

}  // namespace flowservo
