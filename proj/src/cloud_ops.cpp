#include "mvfuse/cloud_ops.hpp"

#include "mvfuse/error.hpp"
#include "mvfuse/kdtree.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace mvfuse {

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size))
    throw Error(ErrorCode::InvalidParameter, "voxel_size must be positive");

  const bool with_normals = cloud.has_normals();
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slots;
  std::vector<Vec3> sums;
  std::vector<Vec3> normal_sums;
  std::vector<std::size_t> counts;
  slots.reserve(cloud.size());

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                       static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                       static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    auto [it, inserted] = slots.try_emplace(key, sums.size());
    if (inserted) {
      sums.push_back(Vec3::Zero());
      counts.push_back(0);
      if (with_normals) normal_sums.push_back(Vec3::Zero());
    }
    sums[it->second] += p;
    counts[it->second] += 1;
    if (with_normals) {
      Vec3& acc = normal_sums[it->second];
      // keep the first normal when averaging would cancel out
      if (counts[it->second] == 1 || (acc + cloud.normals[i]).norm() > 1e-12) acc += cloud.normals[i];
    }
  }

  PointCloud out;
  out.points.resize(sums.size());
  for (std::size_t s = 0; s < sums.size(); ++s) out.points[s] = sums[s] / static_cast<double>(counts[s]);
  if (with_normals) {
    out.normals.resize(sums.size());
    for (std::size_t s = 0; s < sums.size(); ++s) out.normals[s] = normal_sums[s].normalized();
  }
  return out;
}

PlaneFit fit_plane(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "plane fit of no points");
  PlaneFit fit;
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  Mat3 scatter = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - c;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  fit.centroid = c;
  fit.eigenvalues = es.eigenvalues();
  fit.basis = es.eigenvectors();
  fit.normal = fit.basis.col(0);
  return fit;
}

PointCloud estimate_normals(const PointCloud& cloud, int k, std::optional<Vec3> viewpoint) {
  if (k < 3) throw Error(ErrorCode::InvalidParameter, "normal estimation needs k >= 3");
  if (cloud.size() < 3) throw Error(ErrorCode::InsufficientPoints, "normal estimation needs >= 3 points");

  const KdTree tree(cloud.points);
  PointCloud out = cloud;
  out.normals.resize(cloud.size());
  std::vector<Vec3> hood;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = tree.knn(cloud.points[i], static_cast<std::size_t>(k));
    hood.clear();
    for (const auto& n : nn) hood.push_back(cloud.points[n.index]);
    Vec3 normal = fit_plane(hood).normal;
    if (viewpoint && normal.dot(*viewpoint - cloud.points[i]) < 0.0) normal = -normal;
    out.normals[i] = normal;
  }
  return out;
}

PointCloud statistical_outlier_filter(const PointCloud& cloud, int k, double std_ratio) {
  if (k < 1) throw Error(ErrorCode::InvalidParameter, "outlier filter needs k >= 1");
  if (static_cast<std::size_t>(k) >= cloud.size())
    throw Error(ErrorCode::InsufficientPoints, "outlier filter needs more than k points");
  if (std::isinf(std_ratio) && std_ratio > 0.0) return cloud;

  const KdTree tree(cloud.points);
  std::vector<double> mean_dist(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = tree.knn(cloud.points[i], static_cast<std::size_t>(k) + 1);
    double sum = 0.0;
    int used = 0;
    for (const auto& n : nn) {
      if (n.index == i) continue;
      if (used == k) break;
      sum += std::sqrt(n.distance_sq);
      ++used;
    }
    mean_dist[i] = sum / used;
  }

  double mean = 0.0;
  for (double d : mean_dist) mean += d;
  mean /= static_cast<double>(mean_dist.size());
  double var = 0.0;
  for (double d : mean_dist) var += (d - mean) * (d - mean);
  const double stddev = std::sqrt(var / static_cast<double>(mean_dist.size() - 1));
  // round-off alone on an evenly spaced cloud must not remove anything
  if (stddev <= 1e-12 * mean) return cloud;

  const double limit = mean + std_ratio * stddev;
  std::vector<std::size_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (mean_dist[i] <= limit) keep.push_back(i);
  }
  return cloud.select(keep);
}

PointCloud crop(const PointCloud& cloud, const Aabb& box) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (box.contains(cloud.points[i])) keep.push_back(i);
  }
  return cloud.select(keep);
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& transform) {
  if (transform.rotation() == Mat3::Identity() && transform.translation().isZero(0.0)) return cloud;
  PointCloud out = cloud;
  const Mat3& r = transform.rotation();
  for (auto& p : out.points) p = transform.apply(p);
  for (auto& n : out.normals) n = r * n;
  for (auto& c : out.covariances) c = r * c * r.transpose();
  return out;
}

}  // namespace mvfuse
