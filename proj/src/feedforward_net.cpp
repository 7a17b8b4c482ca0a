#include "flowservo/feedforward_net.hpp"

#include <cmath>
#include <random>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

using Eigen::Index;
using Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;

}  // namespace

FeedforwardNet::FeedforwardNet(const FeedforwardNetConfig& config)
    : PlanNetwork(config.horizon, config.limits, config.seed), config_(config) {
  if (config.hidden <= 0 || config.horizon == 0) {
    throw DomainError("feedforward net: hidden width and horizon must be positive");
  }
  const Index h = config.hidden;
  const Index out = static_cast<Index>(6 * config.horizon);
  w1_ = 0;
  b1_ = w1_ + h * 6;
  w2_ = b1_ + h;
  b2_ = w2_ + h * h;
  w3_ = b2_ + h;
  b3_ = w3_ + out * h;
  total_ = b3_ + out;
  init_storage(total_);
  reset();
}

void FeedforwardNet::initialize(Eigen::VectorXd& params, std::uint64_t seed) const {
  const Index h = config_.hidden;
  const Index out = static_cast<Index>(6 * config_.horizon);
  params = VectorXd::Zero(total_);
  std::mt19937_64 rng(seed);
  auto fill = [&](Index offset, Index n, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (Index i = 0; i < n; ++i) params[offset + i] = dist(rng);
  };
  fill(w1_, h * 6, 6.0);
  fill(w2_, h * h, static_cast<double>(h));
  if (!config_.zero_output) fill(w3_, out * h, static_cast<double>(h));
}

FeedforwardNet::Activations FeedforwardNet::run(const Vec6& input) const {
  const Index h = config_.hidden;
  const Index out = static_cast<Index>(6 * config_.horizon);
  const double* p = params_.data();
  Activations a;
  a.h1 = (ConstMatMap(p + w1_, h, 6) * input + Eigen::Map<const VectorXd>(p + b1_, h)).array().tanh().matrix();
  a.h2 = (ConstMatMap(p + w2_, h, h) * a.h1 + Eigen::Map<const VectorXd>(p + b2_, h)).array().tanh().matrix();
  const VectorXd z = ConstMatMap(p + w3_, out, h) * a.h2 + Eigen::Map<const VectorXd>(p + b3_, out);
  const Vec6 bound = limits_.bounds();
  a.squashed.resize(out);
  a.v.resize(out);
  for (Index i = 0; i < out; ++i) {
    const double b = bound[i % 6];
    a.squashed[i] = std::tanh(z[i] / b);
    a.v[i] = b * a.squashed[i];
  }
  return a;
}

VelocityPlan FeedforwardNet::forward(const VelocityScrew& previous) const {
  const Activations a = run(previous.vector());
  VelocityPlan plan;
  for (std::size_t k = 0; k < horizon_; ++k) {
    plan.twists.push_back(VelocityScrew::from_vector(a.v.segment<6>(static_cast<Index>(6 * k))));
  }
  return plan;
}

double FeedforwardNet::loss_and_gradient(const VelocityScrew& previous, const FlowObjective& objective,
                                         Eigen::VectorXd& gradient) const {
  const Index h = config_.hidden;
  const Index out = static_cast<Index>(6 * config_.horizon);
  const Vec6 input = previous.vector();
  const Activations a = run(input);
  Vec6 sum = Vec6::Zero();
  for (std::size_t k = 0; k < horizon_; ++k) sum += a.v.segment<6>(static_cast<Index>(6 * k));
  const double loss = objective.loss(sum);
  const Vec6 dsum = objective.gradient(sum);

  const double* p = params_.data();
  gradient = VectorXd::Zero(total_);
  double* g = gradient.data();
  VectorXd dz(out);
  for (Index i = 0; i < out; ++i) dz[i] = dsum[i % 6] * (1.0 - a.squashed[i] * a.squashed[i]);
  MatMap(g + w3_, out, h).noalias() = dz * a.h2.transpose();
  Eigen::Map<VectorXd>(g + b3_, out) = dz;
  const VectorXd dpre2 = (ConstMatMap(p + w3_, out, h).transpose() * dz)
                             .cwiseProduct((1.0 - a.h2.array().square()).matrix());
  MatMap(g + w2_, h, h).noalias() = dpre2 * a.h1.transpose();
  Eigen::Map<VectorXd>(g + b2_, h) = dpre2;
  const VectorXd dpre1 = (ConstMatMap(p + w2_, h, h).transpose() * dpre2)
                             .cwiseProduct((1.0 - a.h1.array().square()).matrix());
  MatMap(g + w1_, h, 6).noalias() = dpre1 * input.transpose();
  Eigen::Map<VectorXd>(g + b1_, h) = dpre1;
  return loss;
}

}  // namespace flowservo
