#pragma once

#include "mvfuse/types.hpp"

#include <Eigen/Dense>

namespace mvfuse {

/// Rotation + translation. Serialized as a homogeneous 4x4 matrix.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static RigidTransform rotation(const Vec3& axis, double angle_rad);

  /// Validates orthonormality, det = +1 and the bottom row, all within `tol`.
  static RigidTransform from_matrix(const Eigen::Matrix4d& m, double tol = 1e-9);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Eigen::Matrix4d matrix() const;
  RigidTransform inverse() const;

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  /// Geodesic rotation angle in radians, in [0, pi].
  double angle() const;

  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_};
  }

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// compose(a, b) applies b first, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }

Mat3 skew(const Vec3& v);
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& rotation);

/// Twists are ordered (omega, v): rotation vector first, then translation part.
RigidTransform se3_exp(const Vec6& twist);
Vec6 se3_log(const RigidTransform& transform);

}  // namespace mvfuse
