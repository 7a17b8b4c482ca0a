#include <doctest.h>

#include <random>

#include "flowservo/error.hpp"
#include "flowservo/predict.hpp"
#include "flowservo/scene.hpp"
#include "support.hpp"

using namespace flowservo;
using doctest::Approx;

namespace {

VelocityPlan random_plan(std::mt19937_64& rng, std::size_t t, double scale) {
  VelocityPlan p;
  for (std::size_t k = 0; k < t; ++k) p.twists.push_back(VelocityScrew::from_vector(testing::random_twist(rng, scale)));
  return p;
}

}  // namespace

TEST_SUITE("predict") {

TEST_CASE("generate_flow basics") {
  const auto inst = testing::random_instance(1);
  const FlowSampleSet zero = generate_flow(inst.model, VelocityPlan::zeros(5));
  REQUIRE(zero.size() == inst.target.size());
  for (const auto& s : zero.samples) {
    CHECK(s.dx == 0.0);
    CHECK(s.dy == 0.0);
  }

  std::mt19937_64 rng(2);
  const VelocityPlan one = random_plan(rng, 1, 0.3);
  const Eigen::VectorXd expected = inst.model.interaction.rows * one.twists[0].vector() * inst.model.dt;
  CHECK((generate_flow(inst.model, one).displacement_vector() - expected).cwiseAbs().maxCoeff() < 1e-15);

  VelocityPlan cancel = VelocityPlan::zeros(5);
  cancel.twists[0] = one.twists[0];
  cancel.twists[1] = VelocityScrew::from_vector(-one.twists[0].vector());
  CHECK(generate_flow(inst.model, cancel).displacement_vector().cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("generate_flow equals the per-step sum") {
  const auto inst = testing::random_instance(3);
  std::mt19937_64 rng(4);
  const VelocityPlan p = random_plan(rng, 5, 0.2);
  Eigen::VectorXd stepwise = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * inst.target.size()));
  for (const auto& tw : p.twists) stepwise += inst.model.interaction.rows * tw.vector() * inst.model.dt;
  CHECK((generate_flow(inst.model, p).displacement_vector() - stepwise).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("generate_flow is linear in the plan") {
  const auto inst = testing::random_instance(5);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) {
    const VelocityPlan p1 = random_plan(rng, 5, 0.3);
    const VelocityPlan p2 = random_plan(rng, 5, 0.3);
    const double a = 1.7, b = -0.6;
    const VelocityPlan mix = VelocityPlan::from_matrix(a * p1.matrix() + b * p2.matrix());
    const Eigen::VectorXd lhs = generate_flow(inst.model, mix).displacement_vector();
    const Eigen::VectorXd rhs = a * generate_flow(inst.model, p1).displacement_vector() +
                                b * generate_flow(inst.model, p2).displacement_vector();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("flow_loss examples") {
  auto inst = testing::random_instance(7, 64, 0.1, 0.3, 0.0);
  VelocityPlan exact = VelocityPlan::zeros(5);
  exact.twists[2] = VelocityScrew::from_vector(inst.true_sum);
  CHECK(flow_loss(inst.model, exact, inst.target) < 1e-30);

  const Eigen::VectorXd f = inst.target.displacement_vector();
  CHECK(flow_loss(inst.model, VelocityPlan::zeros(5), inst.target) ==
        Approx(f.squaredNorm() / static_cast<double>(f.size())).epsilon(1e-14));

  auto misaligned = inst.target;
  misaligned.samples[3].coord.x += 0.01;
  CHECK_THROWS_AS(flow_loss(inst.model, exact, misaligned), DomainError);
  misaligned.samples.pop_back();
  CHECK_THROWS_AS(flow_loss(inst.model, exact, misaligned), DomainError);
}

TEST_CASE("flow_loss is bounded below by the least-squares residual") {
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    const auto inst = testing::random_instance(seed);
    const Vec6 ls = testing::normal_equations_sum(inst);
    const double floor = testing::mse(inst, ls);
    for (int i = 0; i < 10; ++i) CHECK(flow_loss(inst.model, random_plan(rng, 5, 0.3), inst.target) >= floor);
    VelocityPlan split = random_plan(rng, 5, 0.3);
    split.twists[4] = VelocityScrew::from_vector(ls - (split.sum() - split.twists[4].vector()));
    CHECK(flow_loss(inst.model, split, inst.target) == Approx(floor).epsilon(1e-9));
  }
}

TEST_CASE("flow_loss_grad") {
  const auto inst = testing::random_instance(11);
  std::mt19937_64 rng(12);
  const VelocityPlan p = random_plan(rng, 5, 0.3);
  const auto g = flow_loss_grad(inst.model, p, inst.target);
  REQUIRE(g.size() == 5);
  for (std::size_t k = 1; k < 5; ++k) CHECK((g[k] - g[0]).cwiseAbs().maxCoeff() == 0.0);

  for (std::size_t k = 0; k < 5; ++k) {
    for (int c = 0; c < 6; ++c) {
      const double h = 1e-6;
      auto up = p.matrix(), down = p.matrix();
      up(static_cast<Eigen::Index>(k), c) += h;
      down(static_cast<Eigen::Index>(k), c) -= h;
      const double fd = (flow_loss(inst.model, VelocityPlan::from_matrix(up), inst.target) -
                         flow_loss(inst.model, VelocityPlan::from_matrix(down), inst.target)) /
                        (2 * h);
      CHECK(std::abs(fd - g[k][c]) <= 1e-6 * std::max(1e-3, std::abs(g[k][c])));
    }
  }

  VelocityPlan opt = VelocityPlan::zeros(5);
  opt.twists[0] = VelocityScrew::from_vector(testing::normal_equations_sum(inst));
  for (const Vec6& gk : flow_loss_grad(inst.model, opt, inst.target)) CHECK(gk.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("FlowObjective agrees with the free functions and the normal equations") {
  for (std::uint64_t seed = 40; seed < 50; ++seed) {
    const auto inst = testing::random_instance(seed);
    const FlowObjective obj(inst.model, inst.target);
    CHECK(obj.sample_count() == inst.target.size());
    std::mt19937_64 rng(seed);
    const VelocityPlan p = random_plan(rng, 5, 0.3);
    CHECK(obj.loss(p) == Approx(flow_loss(inst.model, p, inst.target)).epsilon(1e-12));
    CHECK((obj.gradient(p.sum()) - flow_loss_grad(inst.model, p, inst.target)[0]).norm() < 1e-12);
    const Vec6 ls = obj.least_squares_sum();
    CHECK((ls - testing::normal_equations_sum(inst)).norm() < 1e-8);
    CHECK(obj.least_squares_loss() == Approx(testing::mse(inst, ls)).epsilon(1e-10));
  }
}

TEST_CASE("one-step least squares recovers a small true twist") {
  const SyntheticScene scene = generate_scene(SceneConfig{});
  const Intrinsics k;
  const auto r = render(scene, Pose::identity(), k);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec6 xi = testing::random_twist(rng, 0.1);
    const double dt = 0.05;
    const FlowField f =
        flow_from_depth(r.depth, Pose::identity(), integrate_twist(Pose::identity(), VelocityScrew::from_vector(xi), dt), k);
    const FlowSampleSet target = subsample(f, k, SampleGrid{8});
    std::vector<DepthSample> ds;
    for (const auto& s : target.samples) ds.push_back({s.coord.x, s.coord.y, r.depth.at(s.u, s.v)});
    HorizonModel model{stack_interaction(ds), dt};
    const Vec6 est = FlowObjective(model, target).least_squares_sum();
    CHECK((est - xi).norm() < 0.02 * xi.norm());
  }
}

TEST_CASE("plan helpers") {
  const VelocityPlan z = VelocityPlan::zeros(3);
  CHECK(z.horizon() == 3);
  CHECK(z.sum() == Vec6::Zero());
  CHECK(z.is_finite());
  std::mt19937_64 rng(14);
  const VelocityPlan p = random_plan(rng, 4, 1.0);
  CHECK(VelocityPlan::from_matrix(p.matrix()).matrix() == p.matrix());
  VelocityPlan bad = p;
  bad.twists[1].angular.x() = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(bad.is_finite());
}

TEST_CASE("horizon model validation") {
  auto inst = testing::random_instance(15);
  inst.model.dt = 0.0;
  CHECK_THROWS_AS(inst.model.validate(), DomainError);
}

}
