#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "flowservo/error.hpp"
#include "flowservo/flow.hpp"
#include "flowservo/scene.hpp"
#include "support.hpp"

using namespace flowservo;
using doctest::Approx;

namespace {

FlowField random_field(std::mt19937_64& rng, int w, int h, double invalid_fraction = 0.0) {
  std::normal_distribution<float> n(0.0f, 5.0f);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FlowField f(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (u(rng) >= invalid_fraction) f.set(x, y, n(rng), n(rng));
    }
  }
  return f;
}

bool bit_identical(const FlowField& a, const FlowField& b) {
  if (a.width() != b.width() || a.height() != b.height()) return false;
  return std::memcmp(a.u_data().data(), b.u_data().data(), a.pixel_count() * 4) == 0 &&
         std::memcmp(a.v_data().data(), b.v_data().data(), a.pixel_count() * 4) == 0 &&
         std::equal(a.mask().begin(), a.mask().end(), b.mask().begin());
}

const SyntheticScene& desk_scene() {
  static const SyntheticScene scene = generate_scene(SceneConfig{});
  return scene;
}

}  // namespace

TEST_SUITE("flow") {

TEST_CASE("compose_flows identities") {
  std::mt19937_64 rng(1);
  const FlowField f = random_field(rng, 16, 9);
  CHECK(compose_flows(f, FlowField::zeros(16, 9)) == f);
  FlowField neg(16, 9);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 16; ++x) neg.set(x, y, -f.u(x, y), -f.v(x, y));
  }
  const FlowField z = compose_flows(f, neg);
  for (std::size_t i = 0; i < z.pixel_count(); ++i) {
    CHECK(z.u_data()[i] == 0.0f);
    CHECK(z.v_data()[i] == 0.0f);
  }
  CHECK_THROWS_AS(compose_flows(f, FlowField::zeros(9, 16)), DomainError);
}

TEST_CASE("compose_flows intersects masks, commutes and associates") {
  std::mt19937_64 rng(2);
  const FlowField a = random_field(rng, 12, 7, 0.2);
  const FlowField b = random_field(rng, 12, 7, 0.2);
  const FlowField c = random_field(rng, 12, 7, 0.2);
  const FlowField ab = compose_flows(a, b);
  CHECK(ab == compose_flows(b, a));
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 12; ++x) CHECK(ab.valid(x, y) == (a.valid(x, y) && b.valid(x, y)));
  }
  const FlowField l = compose_flows(ab, c);
  const FlowField r = compose_flows(a, compose_flows(b, c));
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 12; ++x) {
      REQUIRE(l.valid(x, y) == r.valid(x, y));
      if (!l.valid(x, y)) continue;
      CHECK(l.u(x, y) == Approx(r.u(x, y)).epsilon(1e-6));
      CHECK(l.v(x, y) == Approx(r.v(x, y)).epsilon(1e-6));
    }
  }
}

TEST_CASE("additive composition error shrinks with the motion") {
  const Intrinsics k;
  const Vec6 xi1 = (Vec6() << 0.1, -0.05, 0.2, 0.05, 0.1, -0.05).finished();
  const Vec6 xi2 = (Vec6() << -0.05, 0.1, 0.1, -0.1, 0.05, 0.1).finished();
  double prev = 0.0;
  for (int level = 0; level < 3; ++level) {
    const double dt = 0.2 / (1 << level);
    const Pose a = Pose::identity();
    const Pose b = integrate_twist(a, VelocityScrew::from_vector(xi1), dt);
    const Pose c = integrate_twist(b, VelocityScrew::from_vector(xi2), dt);
    const FlowField sum = compose_flows(analytic_flow(desk_scene(), a, b, k), analytic_flow(desk_scene(), b, c, k));
    const FlowField direct = analytic_flow(desk_scene(), a, c, k);
    std::vector<double> err;
    for (int v = 0; v < k.height; v += 4) {
      for (int u = 0; u < k.width; u += 4) {
        if (!sum.valid(u, v) || !direct.valid(u, v)) continue;
        err.push_back(std::hypot(sum.u(u, v) - direct.u(u, v), sum.v(u, v) - direct.v(u, v)));
      }
    }
    REQUIRE(err.size() > 500);
    std::sort(err.begin(), err.end());
    const double median = err[err.size() / 2];
    if (level > 0) CHECK(median < 0.6 * prev);
    prev = median;
  }
}

TEST_CASE("sample grid counting") {
  SampleGrid g{8};
  CHECK(g.positions(128).size() == 16);
  CHECK(g.cell_count(128, 128) == 256);
  CHECK(g.positions(128).front() == 4);
  SampleGrid whole{128};
  CHECK(whole.cell_count(128, 128) == 1);
  CHECK(whole.positions(128) == std::vector<int>{64});
  CHECK_THROWS_AS(SampleGrid{0}.positions(10), DomainError);
}

TEST_CASE("subsample converts to normalized units in grid order") {
  Intrinsics k{100, 50, 64, 64, 128, 128};
  const FlowSampleSet zero = subsample(FlowField::zeros(128, 128), k, SampleGrid{8});
  CHECK(zero.size() == 256);
  for (const auto& s : zero.samples) {
    CHECK(s.dx == 0.0);
    CHECK(s.dy == 0.0);
  }
  FlowField f(128, 128);
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) f.set(x, y, 2.0f, -1.0f);
  }
  f.invalidate(4, 4);
  const FlowSampleSet s = subsample(f, k, SampleGrid{8});
  REQUIRE(s.size() == 255);
  CHECK(s.samples[0].u == 12);
  CHECK(s.samples[0].v == 4);
  CHECK(s.samples[0].coord.x == Approx((12 - 64) / 100.0));
  CHECK(s.samples[0].dx == Approx(0.02));
  CHECK(s.samples[0].dy == Approx(-0.02));
  CHECK(s.samples[15].u == 4);
  CHECK(s.samples[15].v == 12);
  CHECK_THROWS_AS(subsample(FlowField(128, 128), k, SampleGrid{8}), CoverageError);
  try {
    subsample(FlowField(128, 128), k, SampleGrid{8});
  } catch (const CoverageError& e) {
    CHECK(e.valid() == 0);
    CHECK(e.required() == kMinSamples);
  }
}

TEST_CASE("depth_from_flow single sample") {
  FlowSampleSet set;
  FlowSample s;
  s.coord = {0, 0};
  s.dx = -0.05;
  set.samples.push_back(s);
  const auto est = depth_from_flow(set, {Vec3(0.1, 0, 0), Vec3::Zero()}, 1.0);
  CHECK(est.depths[0] == Approx(2.0));
  CHECK(est.conditioned[0]);
  CHECK_THROWS_AS(depth_from_flow(set, {Vec3::Zero(), Vec3(0, 0, 1)}, 1.0), UnobservableDepthError);
  CHECK_THROWS_AS(depth_from_flow(set, {Vec3(0.1, 0, 0), Vec3::Zero()}, 0.0), DomainError);
}

TEST_CASE("depth_from_flow keeps the previous depth where translation is too small") {
  FlowSampleSet set;
  FlowSample s;
  s.coord = {0.2, 0.1};
  set.samples.push_back(s);
  const std::vector<double> previous{3.5};
  const auto est = depth_from_flow(set, {Vec3(0, 0, 1e-3), Vec3::Zero()}, 0.1, previous, 2.0, 1e-4);
  CHECK_FALSE(est.conditioned[0]);
  CHECK(est.depths[0] == 3.5);
  const auto fb = depth_from_flow(set, {Vec3(0, 0, 1e-3), Vec3::Zero()}, 0.1, {}, 2.5, 1e-4);
  CHECK(fb.depths[0] == 2.5);
}

TEST_CASE("depth_from_flow recovers rendered depth from translational flow") {
  const Intrinsics k;
  const auto r = render(desk_scene(), Pose::identity(), k);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    VelocityScrew tw{testing::random_twist(rng, 0.1).head<3>(), Vec3::Zero()};
    const double dt = 0.05;
    const Pose b = integrate_twist(Pose::identity(), tw, dt);
    const FlowSampleSet s = subsample(flow_from_depth(r.depth, Pose::identity(), b, k), k, SampleGrid{8});
    const auto est = depth_from_flow(s, tw, dt);
    std::vector<double> rel;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!est.conditioned[i]) continue;
      rel.push_back(std::abs(est.depths[i] - r.depth.at(s.samples[i].u, s.samples[i].v)) /
                    r.depth.at(s.samples[i].u, s.samples[i].v));
    }
    REQUIRE(rel.size() > s.size() / 2);
    std::sort(rel.begin(), rel.end());
    CHECK(rel[rel.size() / 2] < 0.05);
    CHECK(rel.back() < 0.01);
  }
}

TEST_CASE("flo golden file") {
  FlowField f = FlowField::from_components(2, 1, {1.0f, 2.0f}, {3.0f, 4.0f});
  const std::vector<std::uint8_t> expected{
      0x50, 0x49, 0x45, 0x48,  // "PIEH"
      0x02, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
      0x00, 0x00, 0x80, 0x3F,  // 1
      0x00, 0x00, 0x40, 0x40,  // 3
      0x00, 0x00, 0x00, 0x40,  // 2
      0x00, 0x00, 0x80, 0x40,  // 4
  };
  const auto bytes = encode_flo(f);
  CHECK(bytes == expected);
  float magic;
  std::memcpy(&magic, expected.data(), 4);
  CHECK(magic == 202021.25f);

  const auto path = std::filesystem::temp_directory_path() / "flowservo_golden.flo";
  write_flo(f, path);
  std::ifstream in(path, std::ios::binary);
  const std::vector<std::uint8_t> on_disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(on_disk == expected);
  CHECK(read_flo(path) == f);
  std::filesystem::remove(path);
}

TEST_CASE("flo round trip is bit exact") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int i = 0; i < 50; ++i) {
    const FlowField f = random_field(rng, dim(rng), dim(rng));
    REQUIRE(bit_identical(decode_flo(encode_flo(f)), f));
  }
  FlowField special = FlowField::from_components(3, 1, {-0.0f, 1e-38f, -3.4e38f}, {0.0f, 7.5f, 1e9f});
  CHECK(bit_identical(decode_flo(encode_flo(special)), special));
}

TEST_CASE("flo invalid pixels are written as unknown flow") {
  FlowField f(2, 1);
  f.set(0, 0, 1.0f, 2.0f);
  const FlowField back = decode_flo(encode_flo(f));
  CHECK(back.valid(0, 0));
  CHECK_FALSE(back.valid(1, 0));
  CHECK(back.u(0, 0) == 1.0f);
}

TEST_CASE("flo format errors carry offsets") {
  auto bytes = encode_flo(FlowField::zeros(2, 2));
  auto bad = bytes;
  bad[0] = 0;
  CHECK_THROWS_AS(decode_flo(bad), FormatError);
  try {
    decode_flo(bad);
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  try {
    decode_flo(truncated);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == truncated.size());
  }
  CHECK_THROWS_AS(decode_flo(std::vector<std::uint8_t>{0x50, 0x49}), FormatError);
  CHECK_THROWS_AS(read_flo("/nonexistent/flowservo.flo"), Error);
}

}
