#include "flowservo/cem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flowservo/error.hpp"

namespace flowservo {

void CemConfig::validate() const {
  if (population <= 0 || iterations < 0) throw DomainError("cem: population and iterations must be positive");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) throw DomainError("cem: elite fraction must be in (0, 1]");
  if (population * elite_fraction < 2.0) throw DomainError("cem: fewer than 2 elites");
  if (!(std_floor > 0.0)) throw DomainError("cem: std floor must be positive");
  if (!(initial_std_linear > 0.0) || !(initial_std_angular > 0.0)) {
    throw DomainError("cem: initial std must be positive");
  }
}

int CemConfig::elite_count() const {
  return static_cast<int>(std::floor(population * elite_fraction + 1e-9));
}

CemResult cem_minimize(const std::function<double(const Eigen::VectorXd&)>& loss,
                       const Eigen::VectorXd& initial_mean, const Eigen::VectorXd& initial_std,
                       const Eigen::VectorXd& bound, const CemConfig& config, std::uint64_t seed) {
  config.validate();
  const Eigen::Index dim = initial_mean.size();
  if (initial_std.size() != dim || bound.size() != dim) throw DomainError("cem: dimension mismatch");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int elites = config.elite_count();
  CemResult result{initial_mean.cwiseMax(-bound).cwiseMin(bound), initial_std, {}};

  std::vector<Eigen::VectorXd> samples(static_cast<std::size_t>(config.population));
  std::vector<double> losses(samples.size());
  std::vector<std::size_t> order(samples.size());
  double kept_loss = config.monotone ? loss(result.mean) : 0.0;
  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      Eigen::VectorXd x(dim);
      for (Eigen::Index d = 0; d < dim; ++d) x[d] = result.mean[d] + result.std[d] * normal(rng);
      samples[s] = x.cwiseMax(-bound).cwiseMin(bound);
      losses[s] = loss(samples[s]);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&losses](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (int e = 0; e < elites; ++e) mean += samples[order[static_cast<std::size_t>(e)]];
    mean /= elites;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (int e = 0; e < elites; ++e) {
      var += (samples[order[static_cast<std::size_t>(e)]] - mean).cwiseAbs2();
    }
    var /= elites;
    result.std = var.cwiseSqrt().cwiseMax(config.std_floor);
    const double mean_loss = loss(mean);
    if (config.monotone && mean_loss > kept_loss) {
      result.loss_trace.push_back(kept_loss);
      continue;
    }
    result.mean = mean;
    kept_loss = mean_loss;
    result.loss_trace.push_back(mean_loss);
  }
  return result;
}

PlanResult cem_plan(const HorizonModel& model, const FlowSampleSet& target, const CemConfig& config,
                    std::uint64_t seed, std::size_t horizon, const VelocityLimits& limits,
                    const VelocityPlan& initial) {
  if (horizon == 0) throw DomainError("cem_plan: horizon must be positive");
  if (!initial.twists.empty() && initial.horizon() != horizon) {
    throw DomainError("cem_plan: initial plan horizon differs from the requested horizon");
  }
  const FlowObjective objective(model, target);
  const auto dim = static_cast<Eigen::Index>(6 * horizon);
  Eigen::VectorXd std0(dim), bound(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const bool linear = (i % 6) < 3;
    std0[i] = linear ? config.initial_std_linear : config.initial_std_angular;
    bound[i] = linear ? limits.linear : limits.angular;
  }
  auto plan_sum = [horizon](const Eigen::VectorXd& x) {
    Vec6 s = Vec6::Zero();
    for (std::size_t k = 0; k < horizon; ++k) s += x.segment<6>(static_cast<Eigen::Index>(6 * k));
    return s;
  };
  Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(dim);
  for (std::size_t k = 0; k < initial.twists.size(); ++k) {
    mean0.segment<6>(static_cast<Eigen::Index>(6 * k)) = initial.twists[k].vector();
  }
  const CemResult r = cem_minimize([&](const Eigen::VectorXd& x) { return objective.loss(plan_sum(x)); },
                                   mean0, std0, bound, config, seed);
  PlanResult out;
  for (std::size_t k = 0; k < horizon; ++k) {
    out.plan.twists.push_back(VelocityScrew::from_vector(r.mean.segment<6>(static_cast<Eigen::Index>(6 * k))));
  }
  out.loss_trace = r.loss_trace;
  return out;
}

}  // namespace flowservo
