#include "flowservo/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s << 0.0, -v.z(),  v.y(),
       v.z(),  0.0, -v.x(),
      -v.y(),  v.x(),  0.0;
  // clang-format on
  return s;
}

}  // namespace

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw DomainError("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw DomainError("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw DomainError("intrinsics: principal point outside the image");
  }
}

Pose Pose::from_rotation_vector(const Vec3& rotvec, const Vec3& translation) {
  return {exp_so3(rotvec), translation};
}

Vec3 Pose::rotation_vector() const { return log_so3(rotation); }

Pose Pose::inverse() const {
  Mat3 rt = rotation.transpose();
  return {rt, -rt * translation};
}

Pose Pose::operator*(const Pose& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

NormalizedPoint normalize_pixel(const Intrinsics& k, double u, double v) {
  if (!k.contains(u, v)) {
    throw DomainError("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                      ") outside the image");
  }
  return {(u - k.cx) / k.fx, (v - k.cy) / k.fy};
}

Mat26 interaction_rows(double x, double y, double z) {
  if (!(z > kMinDepth)) {
    throw DegenerateDepthError("depth " + std::to_string(z) + " at or below minimum depth");
  }
  const double inv_z = 1.0 / z;
  Mat26 rows;
  // clang-format off
  rows << -inv_z, 0.0, x * inv_z, x * y, -(1.0 + x * x), y,
          0.0, -inv_z, y * inv_z, 1.0 + y * y, -x * y, -x;
  // clang-format on
  return rows;
}

InteractionMatrix stack_interaction(std::span<const DepthSample> samples) {
  if (samples.empty()) throw DomainError("stack_interaction: no samples");
  InteractionMatrix out;
  out.rows.resize(static_cast<Eigen::Index>(2 * samples.size()), 6);
  out.sample_coords.reserve(samples.size());
  out.depths.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out.rows.block<2, 6>(static_cast<Eigen::Index>(2 * i), 0) = interaction_rows(s.x, s.y, s.depth);
    out.sample_coords.push_back({s.x, s.y});
    out.depths.push_back(s.depth);
  }
  return out;
}

Mat3 exp_so3(const Vec3& rotvec) {
  const double theta = rotvec.norm();
  const Mat3 k = skew(rotvec);
  if (theta < 1e-8) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 log_so3(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

Pose exp_se3(const Vec6& d) {
  const Vec3 rho = d.head<3>();
  const Vec3 phi = d.tail<3>();
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  Mat3 v;
  if (theta < 1e-6) {
    // Series of the V matrix; the next term is O(theta^3).
    v = Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  } else {
    const double t2 = theta * theta;
    v = Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * k +
        ((theta - std::sin(theta)) / (t2 * theta)) * k * k;
  }
  return {exp_so3(phi), v * rho};
}

Pose integrate_twist(const Pose& pose, const VelocityScrew& twist, double dt) {
  if (!(dt > 0.0)) throw DomainError("integrate_twist: dt must be positive");
  return pose * exp_se3(twist.vector() * dt);
}

PoseError pose_error(const Pose& a, const Pose& b) {
  PoseError e;
  e.translation = (a.translation - b.translation).norm();
  // trace(Ra^T Rb) as an elementwise sum is symmetric in (a, b).
  const double trace = a.rotation.cwiseProduct(b.rotation).sum();
  const double c = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
  e.rotation_deg = std::acos(c) * 180.0 / std::numbers::pi;
  return e;
}

}  // namespace flowservo
