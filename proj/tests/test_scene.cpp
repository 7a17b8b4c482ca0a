#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "flowservo/error.hpp"
#include "flowservo/scene.hpp"
#include "support.hpp"

using namespace flowservo;
using doctest::Approx;

namespace {

SyntheticScene single_point(const Vec3& p, float intensity = 0.5f) {
  SyntheticScene s;
  s.points.push_back({p, intensity});
  return s;
}

SyntheticScene fronto_parallel_plane(double z, double spacing = 0.004) {
  SyntheticScene s;
  for (double y = -1.0; y <= 1.0; y += spacing) {
    for (double x = -1.5; x <= 1.5; x += spacing) {
      const Vec3 p{x, y, z};
      s.points.push_back({p, static_cast<float>(texture_intensity(1, 0.1, p))});
    }
  }
  return s;
}

const SyntheticScene& desk_scene() {
  static const SyntheticScene scene = generate_scene(SceneConfig{});
  return scene;
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("generate_scene is deterministic per seed") {
  SceneConfig c;
  c.wall_spacing = 0.03;
  c.surface_spacing = 0.01;
  const auto a = generate_scene(c);
  const auto b = generate_scene(c);
  REQUIRE(a.points.size() == b.points.size());
  CHECK(a.points.size() >= 1000);
  bool same = true;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    same = same && a.points[i].position == b.points[i].position && a.points[i].intensity == b.points[i].intensity;
  }
  CHECK(same);

  c.seed = 2;
  const auto d = generate_scene(c);
  bool differs = d.points.size() != a.points.size();
  for (std::size_t i = 0; !differs && i < a.points.size(); ++i) {
    differs = a.points[i].position != d.points[i].position || a.points[i].intensity != d.points[i].intensity;
  }
  CHECK(differs);
}

TEST_CASE("generated points stay inside the extent with valid intensities") {
  SceneConfig c;
  c.extent_min = Vec3(-1, -1, 1);
  c.extent_max = Vec3(1, 1, 2);
  c.desk_height = 0.3;
  c.wall_spacing = 0.02;
  c.surface_spacing = 0.01;
  const auto s = generate_scene(c);
  CHECK(s.points.size() >= 1000);
  for (const auto& p : s.points) {
    REQUIRE(((p.position - c.extent_min).array() >= -1e-12).all());
    REQUIRE(((c.extent_max - p.position).array() >= -1e-12).all());
    REQUIRE(p.intensity >= 0.0f);
    REQUIRE(p.intensity <= 1.0f);
  }
}

TEST_CASE("invalid scene configs are rejected") {
  SceneConfig c;
  c.extent_max = c.extent_min;
  CHECK_THROWS_AS(generate_scene(c), DomainError);
  c = {};
  c.wall_spacing = 0;
  CHECK_THROWS_AS(generate_scene(c), DomainError);
}

TEST_CASE("the default view is fully covered") {
  const auto r = render(desk_scene(), Pose::identity(), Intrinsics{});
  for (double d : r.depth.depths) REQUIRE(d > kMinDepth);
}

TEST_CASE("axis point lands on the principal point") {
  const Intrinsics k;
  const auto r = render(single_point(Vec3(0, 0, 1)), Pose::identity(), k);
  const int u = static_cast<int>(k.cx), v = static_cast<int>(k.cy);
  CHECK(r.depth.at(u, v) == 1.0);
  CHECK(r.image.at(u, v) == 0.5f);
  int valid = 0;
  for (double d : r.depth.depths) valid += d > 0;
  CHECK(valid == 1);
}

TEST_CASE("translating the camera shifts the splat by -t fx / Z") {
  Intrinsics k;
  k.width = 200;
  k.cx = 100;
  const auto r = render(single_point(Vec3(0, 0, 1)), Pose::from_rotation_vector(Vec3::Zero(), Vec3(0.1, 0, 0)), k);
  const int expected_u = static_cast<int>(k.cx - 0.1 * k.fx);
  CHECK(r.depth.valid(expected_u, static_cast<int>(k.cy)));
}

TEST_CASE("render is deterministic and consistent with depth") {
  const Pose p = Pose::from_rotation_vector(Vec3(0.02, -0.05, 0.01), Vec3(0.1, -0.05, 0.2));
  const auto a = render(desk_scene(), p, Intrinsics{});
  const auto b = render(desk_scene(), p, Intrinsics{});
  CHECK(a.image == b.image);
  CHECK(a.depth == b.depth);
  for (std::size_t i = 0; i < a.image.intensities.size(); ++i) {
    const bool covered = a.depth.depths[i] > 0;
    REQUIRE((covered || a.image.intensities[i] == 0.0f));
    REQUIRE(a.image.intensities[i] >= 0.0f);
    REQUIRE(a.image.intensities[i] <= 1.0f);
  }
}

TEST_CASE("empty view renders all invalid") {
  const auto r = render(desk_scene(), Pose::from_rotation_vector(Vec3(0, 3.14159, 0), Vec3::Zero()), Intrinsics{});
  for (double d : r.depth.depths) REQUIRE(d == DepthMap::kInvalid);
}

TEST_CASE("analytic_flow of identical poses is zero") {
  const Pose p = Pose::from_rotation_vector(Vec3(0.01, 0.02, 0), Vec3(0.1, 0, 0));
  const FlowField f = analytic_flow(desk_scene(), p, p, Intrinsics{});
  CHECK(f.valid_count() == f.pixel_count());
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    REQUIRE(std::abs(f.u_data()[i]) < 1e-4f);
    REQUIRE(std::abs(f.v_data()[i]) < 1e-4f);
  }
}

TEST_CASE("forward motion expands the flow radially") {
  const Intrinsics k;
  const FlowField f =
      analytic_flow(desk_scene(), Pose::identity(), Pose::from_rotation_vector(Vec3::Zero(), Vec3(0, 0, 0.1)), k);
  int checked = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      if (!f.valid(u, v) || u == static_cast<int>(k.cx) || v == static_cast<int>(k.cy)) continue;
      REQUIRE((f.u(u, v) > 0) == (u > k.cx));
      REQUIRE((f.v(u, v) > 0) == (v > k.cy));
      ++checked;
    }
  }
  CHECK(checked > 10000);
}

TEST_CASE("sideways motion over a plane gives uniform flow") {
  const Intrinsics k;
  const FlowField f = analytic_flow(fronto_parallel_plane(2.0), Pose::identity(),
                                    Pose::from_rotation_vector(Vec3::Zero(), Vec3(0.1, 0, 0)), k);
  int checked = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      if (!f.valid(u, v)) continue;
      REQUIRE(f.u(u, v) == Approx(-0.1 * k.fx / 2.0).epsilon(1e-5));
      REQUIRE(std::abs(f.v(u, v)) < 1e-5);
      ++checked;
    }
  }
  CHECK(checked > 15000);
}

TEST_CASE("warping by the analytic flow reproduces the target image") {
  const Intrinsics k;
  const Pose a = Pose::identity();
  const Pose b = Pose::from_rotation_vector(Vec3(0.01, -0.015, 0.005), Vec3(0.02, -0.01, 0.03));
  const auto ra = render(desk_scene(), a, k);
  const auto rb = render(desk_scene(), b, k);
  const FlowField f = flow_from_depth(ra.depth, a, b, k);
  std::vector<double> diffs;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      if (!f.valid(u, v)) continue;
      const int ub = static_cast<int>(std::lround(u + f.u(u, v)));
      const int vb = static_cast<int>(std::lround(v + f.v(u, v)));
      if (!rb.depth.valid(ub, vb)) continue;
      const Vec3 pa{ra.depth.at(u, v) * (u - k.cx) / k.fx, ra.depth.at(u, v) * (v - k.cy) / k.fy, ra.depth.at(u, v)};
      const Vec3 pb = (b.inverse() * a).transform(pa);
      if (std::abs(pb.z() - rb.depth.at(ub, vb)) > 0.02 * pb.z()) continue;
      diffs.push_back(std::abs(ra.image.at(u, v) - rb.image.at(ub, vb)));
    }
  }
  REQUIRE(diffs.size() > 10000);
  std::sort(diffs.begin(), diffs.end());
  CHECK(diffs[diffs.size() / 2] < 0.02);
  CHECK(diffs[diffs.size() * 9 / 10] < 0.05);
}

TEST_CASE("analytic flow matches the interaction matrix to second order") {
  const Intrinsics k;
  const auto ra = render(desk_scene(), Pose::identity(), k);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec6 xi = testing::random_twist(rng, 0.2);
    double res[2] = {0, 0};
    for (int h = 0; h < 2; ++h) {
      const double dt = h == 0 ? 0.1 : 0.05;
      const FlowField f =
          flow_from_depth(ra.depth, Pose::identity(), integrate_twist(Pose::identity(), VelocityScrew::from_vector(xi), dt), k);
      for (int v = 4; v < k.height; v += 8) {
        for (int u = 4; u < k.width; u += 8) {
          if (!f.valid(u, v)) continue;
          const auto n = normalize_pixel(k, u, v);
          const Eigen::Vector2d lin = interaction_rows(n.x, n.y, ra.depth.at(u, v)) * xi * dt;
          const Eigen::Vector2d act{f.u(u, v) / k.fx, f.v(u, v) / k.fy};
          res[h] = std::max(res[h], (act - lin).cwiseAbs().maxCoeff());
        }
      }
    }
    CHECK(res[0] / res[1] == Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("photometric_error") {
  Image a{10, 10, std::vector<float>(100, 0.0f)};
  Image b{10, 10, std::vector<float>(100, 1.0f)};
  CHECK(photometric_error(a, a).sum == 0.0);
  CHECK(photometric_error(a, b).sum == 100.0);
  CHECK(photometric_error(a, b).mean == 1.0);
  const auto r1 = render(desk_scene(), Pose::identity(), Intrinsics{});
  const auto r2 = render(desk_scene(), Pose::from_rotation_vector(Vec3::Zero(), Vec3(0.05, 0, 0)), Intrinsics{});
  CHECK(photometric_error(r1.image, r2.image).sum == photometric_error(r2.image, r1.image).sum);
  Image c{5, 20, std::vector<float>(100, 0.0f)};
  CHECK_THROWS_AS(photometric_error(a, c), DomainError);
}

TEST_CASE("pgm round trip") {
  const auto r = render(desk_scene(), Pose::identity(), Intrinsics{});
  const auto path = std::filesystem::temp_directory_path() / "flowservo_test.pgm";
  write_pgm(r.image, path);
  const Image back = read_pgm(path);
  CHECK(back.width == r.image.width);
  CHECK(back.height == r.image.height);
  for (std::size_t i = 0; i < back.intensities.size(); ++i) {
    REQUIRE(std::abs(back.intensities[i] - r.image.intensities[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  std::filesystem::remove(path);
}

}
