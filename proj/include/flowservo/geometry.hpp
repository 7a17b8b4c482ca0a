#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace flowservo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

/// Depths at or below this value make the interaction matrix singular.
inline constexpr double kMinDepth = 1e-3;

/// Pinhole intrinsics. Pixel (u, v) addresses the pixel whose center is at (u, v);
/// y points down.
struct Intrinsics {
  double fx = 160.0;
  double fy = 160.0;
  double cx = 80.0;
  double cy = 60.0;
  int width = 160;
  int height = 120;

  /// Throws DomainError when the invariants do not hold.
  void validate() const;
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
};

/// Camera-to-world rigid transform: p_world = rotation * p_camera + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  /// Rotation from an axis-angle vector (radians).
  static Pose from_rotation_vector(const Vec3& rotvec, const Vec3& translation);

  Vec3 rotation_vector() const;
  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 transform(const Vec3& p) const { return rotation * p + translation; }
  /// Checks orthonormality and det = +1 within `tol`.
  bool is_valid(double tol = 1e-9) const;
};

/// Camera-frame twist [v; w] in m/s and rad/s.
struct VelocityScrew {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();

  static VelocityScrew from_vector(const Vec6& v) {
    return {v.head<3>(), v.tail<3>()};
  }
  Vec6 vector() const {
    Vec6 out;
    out << linear, angular;
    return out;
  }
  bool is_finite() const { return linear.allFinite() && angular.allFinite(); }
};

struct NormalizedPoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const NormalizedPoint&) const = default;
};

struct DepthSample {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;
};

/// Stacked image Jacobian, two rows per sample.
struct InteractionMatrix {
  Eigen::Matrix<double, Eigen::Dynamic, 6> rows;
  std::vector<NormalizedPoint> sample_coords;
  std::vector<double> depths;

  std::size_t size() const { return sample_coords.size(); }
};

NormalizedPoint normalize_pixel(const Intrinsics& intrinsics, double u, double v);

/// The two interaction-matrix rows for a point at normalized (x, y) and depth z.
Mat26 interaction_rows(double x, double y, double z);

InteractionMatrix stack_interaction(std::span<const DepthSample> samples);

/// Rodrigues rotation for an axis-angle vector.
Mat3 exp_so3(const Vec3& rotvec);
/// Inverse of exp_so3; angle in [0, pi].
Vec3 log_so3(const Mat3& rotation);
/// Closed-form SE(3) exponential of a (translation, rotation) displacement.
Pose exp_se3(const Vec6& displacement);

/// Moves the camera by exp(dt * twist) expressed in its own frame.
Pose integrate_twist(const Pose& pose, const VelocityScrew& twist, double dt);

struct PoseError {
  double translation = 0.0;  // meters
  double rotation_deg = 0.0;
};

PoseError pose_error(const Pose& a, const Pose& b);

}  // namespace flowservo
