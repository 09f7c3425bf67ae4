#pragma once

#include "mvfuse/types.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace mvfuse {

struct Neighbor {
  std::size_t index = 0;
  double distance_sq = 0.0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance_sq < b.distance_sq || (a.distance_sq == b.distance_sq && a.index < b.index);
  }
};

/// Exact k-d tree over a fixed point set. Results are ordered by
/// (squared distance, point index), so ties resolve to the lowest index and
/// every query agrees with an exhaustive scan.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);
  explicit KdTree(const PointCloud& cloud) : KdTree(cloud.points) {}

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  Neighbor nearest(const Vec3& query) const;
  /// At most k neighbors (clamped to the point count), sorted.
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;
  /// All points within `radius` (inclusive), sorted.
  std::vector<Neighbor> radius_search(const Vec3& query, double radius) const;

  /// Nearest point within `max_distance` that satisfies `accept(index)`.
  template <typename Predicate>
  std::optional<Neighbor> nearest_if(const Vec3& query, double max_distance, Predicate&& accept) const {
    Neighbor best{std::numeric_limits<std::size_t>::max(), max_distance * max_distance};
    bool found = false;
    if (!nodes_.empty()) search_if(0, query, best, found, accept);
    if (!found) return std::nullopt;
    return best;
  }

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search_knn(std::size_t node, const Vec3& query, std::size_t k, std::vector<Neighbor>& heap) const;
  void search_radius(std::size_t node, const Vec3& query, double r2, std::vector<Neighbor>& out) const;

  template <typename Predicate>
  void search_if(std::size_t node_id, const Vec3& query, Neighbor& best, bool& found, Predicate& accept) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const Neighbor cand{idx, (points_[idx] - query).squaredNorm()};
        if (cand.distance_sq > best.distance_sq) continue;
        if (found && !(cand < best)) continue;
        if (!accept(idx)) continue;
        best = cand;
        found = true;
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const std::size_t near = diff <= 0.0 ? node.left : node.right;
    const std::size_t far = diff <= 0.0 ? node.right : node.left;
    search_if(near, query, best, found, accept);
    if (diff * diff <= best.distance_sq) search_if(far, query, best, found, accept);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace mvfuse
