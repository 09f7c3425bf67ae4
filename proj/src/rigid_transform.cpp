#include "mvfuse/rigid_transform.hpp"

#include "mvfuse/error.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace mvfuse {

RigidTransform RigidTransform::rotation(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::InvalidParameter, "rotation axis must be non-zero");
  return {Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix(), Vec3::Zero()};
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m, double tol) {
  if (!m.allFinite()) throw Error(ErrorCode::InvalidParameter, "transform has non-finite entries");
  const Mat3 r = m.topLeftCorner<3, 3>();
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
    throw Error(ErrorCode::InvalidParameter, "rotation block is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > tol)
    throw Error(ErrorCode::InvalidParameter, "rotation block has det != 1");
  if (std::abs(m(3, 0)) > tol || std::abs(m(3, 1)) > tol || std::abs(m(3, 2)) > tol ||
      std::abs(m(3, 3) - 1.0) > tol)
    throw Error(ErrorCode::InvalidParameter, "bottom row must be (0, 0, 0, 1)");
  return {r, m.topRightCorner<3, 1>()};
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

double RigidTransform::angle() const { return so3_log(rotation_).norm(); }

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(omega);
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Vec3 so3_log(const Mat3& rotation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double s = q.vec().norm();
  if (s < 1e-15) return 2.0 * q.vec();
  const double theta = 2.0 * std::atan2(s, q.w());
  return q.vec() * (theta / s);
}

RigidTransform se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 v = twist.tail<3>();
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  const Mat3 w2 = w * w;
  double a, b;
  if (theta < 1e-5) {
    const double t2 = theta * theta;
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / (theta * theta);
    b = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  const Mat3 jac = Mat3::Identity() + a * w + b * w2;
  return {so3_exp(omega), jac * v};
}

Vec6 se3_log(const RigidTransform& transform) {
  const Vec3 omega = so3_log(transform.rotation());
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  double c;
  if (theta < 1e-5) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
  }
  const Mat3 jac_inv = Mat3::Identity() - 0.5 * w + c * w * w;
  Vec6 out;
  out.head<3>() = omega;
  out.tail<3>() = jac_inv * transform.translation();
  return out;
}

}  // namespace mvfuse
