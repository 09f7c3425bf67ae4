#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace mvfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Points with optional per-point unit normals and 3x3 covariances.
/// Optional channels are either empty or exactly as long as `points`.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<Mat3> covariances;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !points.empty() && normals.size() == points.size(); }
  bool has_covariances() const { return !points.empty() && covariances.size() == points.size(); }

  /// Throws InvalidParameter when a channel length, normal norm or covariance
  /// property is violated, or when a coordinate is not finite.
  void validate() const;

  /// Copy of the listed points (and their channels) in the given order.
  PointCloud select(const std::vector<std::size_t>& indices) const;

  /// Appends `other`; channels survive only when both sides carry them.
  void append(const PointCloud& other);
};

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle set with counter-clockwise winding.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }
  std::size_t triangle_count() const { return triangles.size(); }

  const Vec3& corner(std::size_t tri, int k) const { return vertices[triangles[tri][k]]; }
  Vec3 face_normal(std::size_t tri) const;
  double area(std::size_t tri) const;
  Vec3 face_centroid(std::size_t tri) const;
  /// Area-weighted surface centroid.
  Vec3 centroid() const;
  std::vector<Vec3> face_normals() const;

  /// Throws InvalidParameter on out-of-range indices or zero-area triangles.
  void validate() const;

  void append(const TriangleMesh& other);
};

/// Closed axis-aligned box.
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  static Aabb of(const std::vector<Vec3>& points);
};

}  // namespace mvfuse
