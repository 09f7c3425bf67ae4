#include "mvfuse/delaunay.hpp"

#include <algorithm>
#include <map>
#include <utility>

namespace mvfuse {

namespace {

double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace

double in_circle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const Vec2 ad = a - d, bd = b - d, cd = c - d;
  return ad.squaredNorm() * (bd.x() * cd.y() - cd.x() * bd.y()) -
         bd.squaredNorm() * (ad.x() * cd.y() - cd.x() * ad.y()) +
         cd.squaredNorm() * (ad.x() * bd.y() - bd.x() * ad.y());
}

std::vector<std::array<std::size_t, 3>> delaunay_triangulate(std::span<const Vec2> input) {
  std::vector<std::array<std::size_t, 3>> result;
  const std::size_t n = input.size();
  if (n < 3) return result;

  // Work in a centered unit box so the predicates see O(1) numbers.
  Vec2 lo = input[0], hi = input[0];
  for (const auto& p : input) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  if (extent <= 0.0) return result;
  const Vec2 mid = 0.5 * (lo + hi);
  std::vector<Vec2> pts;
  pts.reserve(n + 3);
  for (const auto& p : input) pts.push_back((p - mid) / extent);
  // Far enough out that circles through a super vertex act as half-planes
  // over the data; a closer one drops thin triangles on the hull.
  constexpr double kSuper = 1e6;
  pts.emplace_back(-kSuper, -kSuper);
  pts.emplace_back(kSuper, -kSuper);
  pts.emplace_back(0.0, kSuper);

  struct Tri {
    std::array<std::size_t, 3> v;
    bool alive = true;
  };
  std::vector<Tri> tris{{{n, n + 1, n + 2}}};

  // Insertion order is sorted lexicographically so duplicates sit together.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::make_pair(pts[a].x(), pts[a].y()) < std::make_pair(pts[b].x(), pts[b].y()) ||
           (pts[a] == pts[b] && a < b);
  });

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pi = order[k];
    if (k > 0 && pts[order[k - 1]] == pts[pi]) continue;
    const Vec2& p = pts[pi];
    // Boundary of the cavity: edges of bad triangles not shared by another bad one.
    std::map<std::pair<std::size_t, std::size_t>, int> edge_count;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (auto& t : tris) {
      if (!t.alive) continue;
      if (in_circle(pts[t.v[0]], pts[t.v[1]], pts[t.v[2]], p) <= 0.0) continue;
      t.alive = false;
      for (int e = 0; e < 3; ++e) {
        const std::size_t a = t.v[e], b = t.v[(e + 1) % 3];
        edges.emplace_back(a, b);
        ++edge_count[std::minmax(a, b)];
      }
    }
    for (const auto& [a, b] : edges) {
      if (edge_count[std::minmax(a, b)] != 1) continue;
      if (orient(pts[a], pts[b], p) <= 0.0) continue;
      tris.push_back({{a, b, pi}});
    }
    std::erase_if(tris, [](const Tri& t) { return !t.alive; });
  }

  for (const auto& t : tris) {
    if (t.v[0] >= n || t.v[1] >= n || t.v[2] >= n) continue;
    result.push_back(t.v);
  }
  return result;
}

}  // namespace mvfuse
