#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "flowservo/flow.hpp"
#include "flowservo/geometry.hpp"

namespace flowservo {

/// Parameters of the procedural desk scene. The goal camera sits at the world
/// origin looking down +z (y points down). The wall is the far face of the extent
/// box and the desk is a horizontal plane below the camera running up to the wall.
struct SceneConfig {
  std::uint64_t seed = 1;
  Vec3 extent_min{-2.5, -2.0, 1.0};
  Vec3 extent_max{2.5, 2.0, 3.0};
  double wall_spacing = 0.008;     // meters between wall points
  double desk_height = 0.3;        // y of the desk plane
  int clutter_patches = 16;        // fronto-parallel patches standing on the desk
  double patch_size_min = 0.15;    // patch side length range (m)
  double patch_size_max = 0.5;
  double surface_spacing = 0.003;  // desk/patch point spacing per meter of depth
  double texture_cell = 0.12;      // value-noise lattice size (m) of the finest octave

  bool operator==(const SceneConfig&) const = default;
};

struct ScenePoint {
  Vec3 position;
  float intensity = 0.0f;
};

struct SyntheticScene {
  std::vector<ScenePoint> points;
  std::uint64_t seed = 0;
  Vec3 extent_min = Vec3::Zero();
  Vec3 extent_max = Vec3::Zero();
};

/// Row-major grayscale image with intensities in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> intensities;

  float at(int u, int v) const { return intensities[static_cast<std::size_t>(v) * width + u]; }
  bool operator==(const Image&) const = default;
};

struct DepthMap {
  static constexpr double kInvalid = -1.0;

  int width = 0;
  int height = 0;
  std::vector<double> depths;

  double at(int u, int v) const { return depths[static_cast<std::size_t>(v) * width + u]; }
  bool valid(int u, int v) const { return at(u, v) > kMinDepth; }
  bool operator==(const DepthMap&) const = default;
};

struct RenderResult {
  Image image;
  DepthMap depth;
};

/// Smooth seeded texture in [0, 1] evaluated at a world point.
double texture_intensity(std::uint64_t seed, double cell, const Vec3& p);

SyntheticScene generate_scene(const SceneConfig& config);

/// Z-buffered point splat: each point lands on the pixel nearest its projection and
/// the closest surface wins. Among points of one surface (depths within 1%) the one
/// projecting nearest the pixel center wins. Empty pixels are 0 / invalid.
RenderResult render(const SyntheticScene& scene, const Pose& pose, const Intrinsics& intrinsics);

/// Flow from view a to view b given a's depth map: each valid pixel center is
/// back-projected at its depth and re-projected into b. Pixels invalid in a, landing
/// behind b, or leaving b's frame are marked invalid.
FlowField flow_from_depth(const DepthMap& depth_a, const Pose& pose_a, const Pose& pose_b,
                          const Intrinsics& intrinsics);

/// Ground-truth flow oracle: renders view a and calls flow_from_depth.
FlowField analytic_flow(const SyntheticScene& scene, const Pose& pose_a, const Pose& pose_b,
                        const Intrinsics& intrinsics);

struct PhotometricError {
  double sum = 0.0;   // sum of squared intensity differences
  double mean = 0.0;  // sum / pixel count
};

/// Throws DomainError on size mismatch.
PhotometricError photometric_error(const Image& a, const Image& b);

/// Binary P5 graymap, 8 bits per pixel.
void write_pgm(const Image& image, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

}  // namespace flowservo
