#include "mvfuse/bvh.hpp"

#include "mvfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvfuse {

namespace {

constexpr std::size_t kLeafTriangles = 4;

bool better_hit(const RayHit& a, const std::optional<RayHit>& best) {
  return !best || a.t < best->t || (a.t == best->t && a.triangle < best->triangle);
}

bool better_closest(double d2, std::size_t tri, const ClosestTriangle& best, bool found) {
  return !found || d2 < best.distance_sq || (d2 == best.distance_sq && tri < best.triangle);
}

constexpr double kMiss = -1.0;

// Entry parameter of the ray into the box, or kMiss when it misses [0, t_max].
double slab_entry(const Aabb& box, const Ray& ray, double t_max) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int k = 0; k < 3; ++k) {
    const double o = ray.origin[k];
    const double d = ray.direction[k];
    if (d == 0.0) {
      if (o < box.min[k] || o > box.max[k]) return kMiss;
      continue;
    }
    double ta = (box.min[k] - o) / d;
    double tb = (box.max[k] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return kMiss;
  }
  return t0;
}

double box_distance_sq(const Aabb& box, const Vec3& p) {
  const Vec3 d = (box.min - p).cwiseMax(p - box.max).cwiseMax(0.0);
  return d.squaredNorm();
}

}  // namespace

std::optional<RayHit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c,
                                         double t_min) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = ray.direction.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-12) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tvec = ray.origin - a;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = ray.direction.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qvec) * inv;
  if (t <= t_min) return std::nullopt;
  return RayHit{0, t, u, v};
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return a + ab * v + ac * w;
}

Bvh::Bvh(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  if (mesh_.empty()) throw Error(ErrorCode::EmptyInput, "cannot build a BVH over an empty mesh");
  mesh_.validate();
  order_.resize(mesh_.triangle_count());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  centroids_.resize(mesh_.triangle_count());
  for (std::size_t t = 0; t < mesh_.triangle_count(); ++t) centroids_[t] = mesh_.face_centroid(t);
  nodes_.reserve(2 * mesh_.triangle_count() / kLeafTriangles + 1);
  build(0, order_.size());
}

std::size_t Bvh::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({});
  Aabb box{mesh_.corner(order_[begin], 0), mesh_.corner(order_[begin], 0)};
  for (std::size_t i = begin; i < end; ++i) {
    for (int k = 0; k < 3; ++k) {
      box.min = box.min.cwiseMin(mesh_.corner(order_[i], k));
      box.max = box.max.cwiseMax(mesh_.corner(order_[i], k));
    }
  }
  // pad so that grazing hits found by the exact triangle test never get culled
  const double pad = 1e-9 * std::max(1.0, (box.max - box.min).maxCoeff());
  box.min.array() -= pad;
  box.max.array() += pad;
  nodes_[id].box = box;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafTriangles) return id;

  Vec3 lo = centroids_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(centroids_[order_[i]]);
    hi = hi.cwiseMax(centroids_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     const double ca = centroids_[a][axis];
                     const double cb = centroids_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].leaf = false;
  return id;
}

std::optional<RayHit> Bvh::intersect(const Ray& ray) const {
  std::optional<RayHit> best;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    const double limit = best ? best->t : std::numeric_limits<double>::infinity();
    if (slab_entry(node.box, ray, limit) == kMiss) continue;
    if (node.leaf) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t tri = order_[i];
        auto hit = intersect_triangle(ray, mesh_.corner(tri, 0), mesh_.corner(tri, 1), mesh_.corner(tri, 2));
        if (!hit) continue;
        hit->triangle = tri;
        if (better_hit(*hit, best)) best = hit;
      }
      continue;
    }
    const double tl = slab_entry(nodes_[node.left].box, ray, limit);
    const double tr = slab_entry(nodes_[node.right].box, ray, limit);
    // push the farther child first so the nearer one is explored next
    if (tl <= tr) {
      if (tr != kMiss) stack.push_back(node.right);
      if (tl != kMiss) stack.push_back(node.left);
    } else {
      if (tl != kMiss) stack.push_back(node.left);
      if (tr != kMiss) stack.push_back(node.right);
    }
  }
  return best;
}

ClosestTriangle Bvh::closest(const Vec3& p) const {
  ClosestTriangle best;
  bool found = false;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (found && box_distance_sq(node.box, p) > best.distance_sq) continue;
    if (node.leaf) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t tri = order_[i];
        const Vec3 q = closest_point_on_triangle(p, mesh_.corner(tri, 0), mesh_.corner(tri, 1), mesh_.corner(tri, 2));
        const double d2 = (q - p).squaredNorm();
        if (better_closest(d2, tri, best, found)) {
          best = {tri, q, d2};
          found = true;
        }
      }
      continue;
    }
    const double dl = box_distance_sq(nodes_[node.left].box, p);
    const double dr = box_distance_sq(nodes_[node.right].box, p);
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return best;
}

std::optional<RayHit> intersect_brute_force(const TriangleMesh& mesh, const Ray& ray) {
  std::optional<RayHit> best;
  for (std::size_t tri = 0; tri < mesh.triangle_count(); ++tri) {
    auto hit = intersect_triangle(ray, mesh.corner(tri, 0), mesh.corner(tri, 1), mesh.corner(tri, 2));
    if (!hit) continue;
    hit->triangle = tri;
    if (better_hit(*hit, best)) best = hit;
  }
  return best;
}

ClosestTriangle closest_brute_force(const TriangleMesh& mesh, const Vec3& p) {
  if (mesh.empty()) throw Error(ErrorCode::EmptyInput, "closest point on an empty mesh");
  ClosestTriangle best;
  bool found = false;
  for (std::size_t tri = 0; tri < mesh.triangle_count(); ++tri) {
    const Vec3 q = closest_point_on_triangle(p, mesh.corner(tri, 0), mesh.corner(tri, 1), mesh.corner(tri, 2));
    const double d2 = (q - p).squaredNorm();
    if (better_closest(d2, tri, best, found)) {
      best = {tri, q, d2};
      found = true;
    }
  }
  return best;
}

}  // namespace mvfuse
