#pragma once

#include "mvfuse/types.hpp"

#include <algorithm>
#include <cstddef>
#include <random>
#include <vector>

namespace mvfuse::testing {

inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

inline PointCloud cloud_of(std::vector<Vec3> pts) {
  PointCloud c;
  c.points = std::move(pts);
  return c;
}

/// Exhaustive k-NN, ordered by (distance^2, index).
inline std::vector<std::pair<double, std::size_t>> brute_knn(const std::vector<Vec3>& pts, const Vec3& q,
                                                             std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.emplace_back((pts[i] - q).squaredNorm(), i);
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  return all;
}

/// Regular grid of (n x n) points on z = height, spacing h, starting at (x0, y0).
inline std::vector<Vec3> grid_points(int n, double h, double height = 0.0, double x0 = 0.0, double y0 = 0.0) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pts.emplace_back(x0 + i * h, y0 + j * h, height);
  return pts;
}

}  // namespace mvfuse::testing
