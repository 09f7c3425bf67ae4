#pragma once

#include "mvfuse/types.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace mvfuse {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

struct RayHit {
  std::size_t triangle = 0;
  double t = 0.0;  // hit point = origin + t * direction
  double u = 0.0;  // barycentric weights of corners 1 and 2
  double v = 0.0;
};

/// Moller-Trumbore; rejects |det| < 1e-12 and hits with t <= t_min.
std::optional<RayHit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c,
                                         double t_min = 1e-12);

/// Closest point of the solid triangle abc to p (interior, edge or vertex).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct ClosestTriangle {
  std::size_t triangle = 0;
  Vec3 point = Vec3::Zero();
  double distance_sq = 0.0;
};

/// Bounding-volume hierarchy over mesh triangles. Nearest results tie-break
/// on the lowest triangle index, matching the brute-force helpers below.
class Bvh {
 public:
  explicit Bvh(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }

  std::optional<RayHit> intersect(const Ray& ray) const;
  ClosestTriangle closest(const Vec3& p) const;

 private:
  struct Node {
    Aabb box;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t left = 0;
    std::size_t right = 0;
    bool leaf = true;
  };

  std::size_t build(std::size_t begin, std::size_t end);

  TriangleMesh mesh_;
  std::vector<std::size_t> order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

std::optional<RayHit> intersect_brute_force(const TriangleMesh& mesh, const Ray& ray);
ClosestTriangle closest_brute_force(const TriangleMesh& mesh, const Vec3& p);

}  // namespace mvfuse
