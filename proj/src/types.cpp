#include "mvfuse/types.hpp"

#include "mvfuse/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace mvfuse {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite())
      throw Error(ErrorCode::InvalidParameter, "point " + std::to_string(i) + " is not finite");
  }
  if (!normals.empty()) {
    if (normals.size() != points.size())
      throw Error(ErrorCode::InvalidParameter, "normal count differs from point count");
    for (std::size_t i = 0; i < normals.size(); ++i) {
      if (std::abs(normals[i].norm() - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidParameter, "normal " + std::to_string(i) + " is not unit length");
    }
  }
  if (!covariances.empty()) {
    if (covariances.size() != points.size())
      throw Error(ErrorCode::InvalidParameter, "covariance count differs from point count");
    for (std::size_t i = 0; i < covariances.size(); ++i) {
      const Mat3& c = covariances[i];
      const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
      if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw Error(ErrorCode::InvalidParameter, "covariance " + std::to_string(i) + " is not symmetric");
      Eigen::SelfAdjointEigenSolver<Mat3> es(c, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-12 * scale)
        throw Error(ErrorCode::InvalidParameter, "covariance " + std::to_string(i) + " is not PSD");
    }
  }
}

PointCloud PointCloud::select(const std::vector<std::size_t>& indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  const bool n = has_normals();
  const bool c = has_covariances();
  for (std::size_t i : indices) {
    out.points.push_back(points[i]);
    if (n) out.normals.push_back(normals[i]);
    if (c) out.covariances.push_back(covariances[i]);
  }
  return out;
}

void PointCloud::append(const PointCloud& other) {
  const bool keep_normals = (empty() || has_normals()) && other.has_normals();
  const bool keep_cov = (empty() || has_covariances()) && other.has_covariances();
  points.insert(points.end(), other.points.begin(), other.points.end());
  if (keep_normals) normals.insert(normals.end(), other.normals.begin(), other.normals.end());
  else normals.clear();
  if (keep_cov) covariances.insert(covariances.end(), other.covariances.begin(), other.covariances.end());
  else covariances.clear();
}

Vec3 TriangleMesh::face_normal(std::size_t tri) const {
  const Vec3 n = (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0));
  return n.normalized();
}

double TriangleMesh::area(std::size_t tri) const {
  return 0.5 * (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0)).norm();
}

Vec3 TriangleMesh::face_centroid(std::size_t tri) const {
  return (corner(tri, 0) + corner(tri, 1) + corner(tri, 2)) / 3.0;
}

Vec3 TriangleMesh::centroid() const {
  Vec3 acc = Vec3::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const double a = area(i);
    acc += a * face_centroid(i);
    total += a;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyInput, "mesh has no area");
  return acc / total;
}

std::vector<Vec3> TriangleMesh::face_normals() const {
  std::vector<Vec3> out(triangles.size());
  for (std::size_t i = 0; i < triangles.size(); ++i) out[i] = face_normal(i);
  return out;
}

void TriangleMesh::validate() const {
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!vertices[i].allFinite())
      throw Error(ErrorCode::InvalidParameter, "vertex " + std::to_string(i) + " is not finite");
  }
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    for (auto idx : triangles[i]) {
      if (idx >= vertices.size())
        throw Error(ErrorCode::InvalidParameter, "triangle " + std::to_string(i) + " index out of range");
    }
    if (!(area(i) > 0.0))
      throw Error(ErrorCode::InvalidParameter, "triangle " + std::to_string(i) + " is degenerate");
  }
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto offset = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& t : other.triangles) triangles.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
}

Aabb Aabb::of(const std::vector<Vec3>& points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "bounding box of no points");
  Aabb box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

}  // namespace mvfuse
