#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <random>
#include <vector>

#include "flowservo/flow.hpp"
#include "flowservo/geometry.hpp"
#include "flowservo/plan_network.hpp"
#include "flowservo/predict.hpp"

namespace testing {

using namespace flowservo;

/// Image-plane velocity of a static point at camera coordinates p, seen from a camera
/// moving with twist (v, w): dp/dt = -v - w x p, then the quotient rule on x = X/Z.
inline Eigen::Vector2d projected_rate(const Vec3& p, const Vec6& twist) {
  const Vec3 v = twist.head<3>();
  const Vec3 w = twist.tail<3>();
  const Vec3 dp = -v - w.cross(p);
  return {(dp.x() * p.z() - p.x() * dp.z()) / (p.z() * p.z()),
          (dp.y() * p.z() - p.y() * dp.z()) / (p.z() * p.z())};
}

/// Normalized coordinates of world point `pw` seen from camera-to-world pose `pose`.
inline Eigen::Vector2d project(const Pose& pose, const Vec3& pw) {
  const Vec3 pc = pose.rotation.transpose() * (pw - pose.translation);
  return {pc.x() / pc.z(), pc.y() / pc.z()};
}

inline Vec6 random_twist(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Vec6 v;
  for (int i = 0; i < 6; ++i) v[i] = n(rng);
  return v;
}

/// A frozen (model, target) pair: N random samples in the image with depths in [1, 4],
/// target flow drawn from a true twist sum plus noise so the least-squares residual is
/// nonzero.
struct Instance {
  HorizonModel model;
  FlowSampleSet target;
  Vec6 true_sum;
};

inline Instance random_instance(std::uint64_t seed, std::size_t n = 96, double dt = 0.1, double twist_scale = 0.3,
                                double noise = 0.01) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.5, 0.5);
  std::uniform_real_distribution<double> uz(1.0, 4.0);
  std::normal_distribution<double> nn(0.0, noise);
  std::vector<DepthSample> samples;
  for (std::size_t i = 0; i < n; ++i) samples.push_back({ux(rng), 0.75 * ux(rng), uz(rng)});
  Instance inst;
  inst.model.interaction = stack_interaction(samples);
  inst.model.dt = dt;
  inst.true_sum = random_twist(rng, twist_scale);
  const Eigen::VectorXd f = inst.model.interaction.rows * inst.true_sum * dt;
  for (std::size_t i = 0; i < n; ++i) {
    FlowSample s;
    s.u = -1;
    s.v = -1;
    s.coord = {samples[i].x, samples[i].y};
    s.dx = f[2 * i] + nn(rng);
    s.dy = f[2 * i + 1] + nn(rng);
    inst.target.samples.push_back(s);
  }
  return inst;
}

/// Least squares by the normal equations, independent of FlowObjective's QR path.
inline Vec6 normal_equations_sum(const Instance& inst) {
  const Eigen::MatrixXd a = inst.model.interaction.rows * inst.model.dt;
  const Eigen::VectorXd b = inst.target.displacement_vector();
  return (a.transpose() * a).ldlt().solve(a.transpose() * b);
}

inline double mse(const Instance& inst, const Vec6& sum) {
  const Eigen::VectorXd r =
      inst.model.interaction.rows * sum * inst.model.dt - inst.target.displacement_vector();
  return r.squaredNorm() / static_cast<double>(r.size());
}

/// Largest |analytic - central difference| over parameters, relative to the larger of
/// the two magnitudes (floored at 1e-3 of the largest gradient entry).
inline double max_relative_gradient_error(PlanNetwork& net, const VelocityScrew& prev, const FlowObjective& obj) {
  Eigen::VectorXd g;
  net.loss_and_gradient(prev, obj, g);
  Eigen::VectorXd& p = net.parameters();
  Eigen::VectorXd scratch;
  double worst = 0.0;
  const double scale = g.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
    const double keep = p[i];
    p[i] = keep + h;
    const double up = net.loss_and_gradient(prev, obj, scratch);
    p[i] = keep - h;
    const double down = net.loss_and_gradient(prev, obj, scratch);
    p[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-3 * scale});
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  return worst;
}

}  // namespace testing
