#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "flowservo/geometry.hpp"

namespace flowservo {

/// Dense per-pixel displacement (pixels) with a validity mask.
class FlowField {
 public:
  FlowField() = default;
  /// All pixels start invalid with zero displacement.
  FlowField(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return u_.size(); }

  float u(int x, int y) const { return u_[index(x, y)]; }
  float v(int x, int y) const { return v_[index(x, y)]; }
  bool valid(int x, int y) const { return valid_[index(x, y)] != 0; }
  void set(int x, int y, float du, float dv);
  void invalidate(int x, int y);

  std::span<const float> u_data() const { return u_; }
  std::span<const float> v_data() const { return v_; }
  std::span<const std::uint8_t> mask() const { return valid_; }
  std::size_t valid_count() const;

  /// Fully valid field, as read from a `.flo` file.
  static FlowField from_components(int width, int height, std::vector<float> u, std::vector<float> v);
  static FlowField zeros(int width, int height);

  bool operator==(const FlowField&) const = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> u_;
  std::vector<float> v_;
  std::vector<std::uint8_t> valid_;
};

/// Minimum number of valid samples for the 2N x 6 least-squares problems.
inline constexpr std::size_t kMinSamples = 64;

struct FlowSample {
  int u = 0;  // pixel location
  int v = 0;
  NormalizedPoint coord;
  double dx = 0.0;  // displacement in normalized units
  double dy = 0.0;
};

struct FlowSampleSet {
  std::vector<FlowSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Stacked (dx0, dy0, dx1, dy1, ...).
  Eigen::VectorXd displacement_vector() const;
};

/// Pointwise sum under the additive flow model; validity is the mask intersection.
FlowField compose_flows(const FlowField& ab, const FlowField& bc);

/// Regular grid positions for a stride: first sample at stride/2, then every stride.
struct SampleGrid {
  int stride = 8;

  std::vector<int> positions(int extent) const;
  std::size_t cell_count(int width, int height) const;
};

/// Samples the grid, keeps valid pixels, converts displacements to normalized units.
/// Throws CoverageError if fewer than `min_samples` remain.
FlowSampleSet subsample(const FlowField& flow, const Intrinsics& intrinsics, const SampleGrid& grid,
                        std::size_t min_samples = kMinSamples);

struct DepthEstimate {
  std::vector<double> depths;
  /// True where the depth was solved from flow; false where the fallback was used.
  std::vector<bool> conditioned;
};

/// Per-sample depth from the relation flow = L(Z) * twist * dt, least squares over the
/// two rows in inverse depth. Samples whose translational flow magnitude is below
/// `min_translational_flow`, or whose solution is not a usable depth, take the
/// matching entry of `previous` (or `fallback_depth` without one).
/// Throws UnobservableDepthError when the twist has no translation.
DepthEstimate depth_from_flow(const FlowSampleSet& flow, const VelocityScrew& twist, double dt,
                              std::span<const double> previous = {}, double fallback_depth = 2.0,
                              double min_translational_flow = 1e-4);

/// Middlebury `.flo` magic number ("PIEH" read as a little-endian float).
inline constexpr float kFloMagic = 202021.25f;

void write_flo(const FlowField& flow, const std::filesystem::path& path);
/// Throws FormatError (with byte offset) on bad magic, bad size, or truncation.
FlowField read_flo(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(std::span<const std::uint8_t> bytes);

}  // namespace flowservo
