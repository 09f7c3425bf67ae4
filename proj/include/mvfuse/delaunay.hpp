#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace mvfuse {

using Vec2 = Eigen::Vector2d;

/// Bowyer-Watson triangulation. Triangles index into `points` and are
/// counter-clockwise; exact duplicates are skipped. Fewer than three points,
/// or all points collinear, give no triangles.
std::vector<std::array<std::size_t, 3>> delaunay_triangulate(std::span<const Vec2> points);

/// > 0 when d lies strictly inside the circumcircle of the ccw triangle abc.
double in_circle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

}  // namespace mvfuse
