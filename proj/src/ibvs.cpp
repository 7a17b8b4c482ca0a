#include "flowservo/ibvs.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

constexpr std::array<std::string_view, 4> kIds{"ibvs", "lstm", "ff", "cem"};

}  // namespace

VelocityScrew VelocityLimits::clamp(const VelocityScrew& twist) const {
  const Vec6 b = bounds();
  return VelocityScrew::from_vector(twist.vector().cwiseMax(-b).cwiseMin(b));
}

bool VelocityLimits::contains(const VelocityScrew& twist) const {
  return (twist.vector().cwiseAbs().array() <= bounds().array()).all();
}

std::string_view controller_id(ControllerKind kind) { return kIds[static_cast<std::size_t>(kind)]; }

ControllerKind parse_controller(std::string_view id) {
  for (std::size_t i = 0; i < kIds.size(); ++i) {
    if (kIds[i] == id) return static_cast<ControllerKind>(i);
  }
  std::string valid;
  for (auto k : kIds) valid += (valid.empty() ? "" : ", ") + std::string(k);
  throw ConfigError("controller", "unknown controller '" + std::string(id) + "' (valid: " + valid + ")");
}

std::vector<std::string_view> controller_ids() { return {kIds.begin(), kIds.end()}; }

void IbvsConfig::validate() const {
  if (!(lambda > 0.0)) throw DomainError("ibvs: lambda must be positive");
  if (!(mu >= 0.0)) throw DomainError("ibvs: mu must be non-negative");
}

VelocityScrew ibvs_step(const InteractionMatrix& interaction, const FlowSampleSet& target,
                        const IbvsConfig& config) {
  config.validate();
  const auto& l = interaction.rows;
  if (l.rows() != static_cast<Eigen::Index>(2 * target.size())) {
    throw DomainError("ibvs_step: target and interaction matrix differ in sample count");
  }
  if (l.rows() < 6) throw ConditioningError("ibvs_step: fewer than 6 rows");

  const Eigen::Matrix<double, 6, 6> ltl = l.transpose() * l;
  Eigen::Matrix<double, 6, 6> damped = ltl;
  damped.diagonal() += config.mu * ltl.diagonal();

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(damped, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || !(lo > hi * 1e-12)) {
    throw ConditioningError("ibvs_step: damped normal matrix is singular");
  }

  const Eigen::VectorXd error = -target.displacement_vector();
  const Vec6 v = -config.lambda * damped.ldlt().solve(l.transpose() * error);
  return VelocityScrew::from_vector(v);
}

}  // namespace flowservo
