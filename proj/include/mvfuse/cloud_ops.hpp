#pragma once

#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/types.hpp"

#include <limits>
#include <optional>
#include <span>

namespace mvfuse {

/// Replaces the points of every occupied voxel by their centroid. The grid is
/// anchored at the origin (voxel index = floor(p / voxel_size)); output order
/// follows the first point seen in each voxel. Normals are averaged and
/// renormalized, covariances are dropped.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

/// PCA normals from the k nearest neighbors (the point itself included).
/// Without a viewpoint the sign is whatever the eigen-solver returns.
PointCloud estimate_normals(const PointCloud& cloud, int k = 30,
                            std::optional<Vec3> viewpoint = std::nullopt);

/// Drops points whose mean distance to their k nearest neighbors exceeds
/// mean + std_ratio * std over the cloud. An infinite ratio disables it.
PointCloud statistical_outlier_filter(const PointCloud& cloud, int k, double std_ratio);

/// Keeps the points inside the closed box.
PointCloud crop(const PointCloud& cloud, const Aabb& box);

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& transform);

struct PlaneFit {
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  /// Eigenvalues of the scatter matrix, ascending.
  Vec3 eigenvalues = Vec3::Zero();
  /// Columns are eigenvectors matching `eigenvalues`.
  Mat3 basis = Mat3::Identity();
};

/// Least-squares plane through the points (centroid + smallest eigenvector).
PlaneFit fit_plane(std::span<const Vec3> points);

}  // namespace mvfuse
