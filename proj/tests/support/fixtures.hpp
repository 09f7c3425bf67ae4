#pragma once

#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/types.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace mvfuse::fixtures {

/// z = amp * sin(2 pi x / wavelength) * cos(2 pi y / wavelength), sampled on
/// the global lattice (i * spacing, j * spacing) inside [x0, x1] x [y0, y1].
/// Patches cut from the same lattice share their overlapping points exactly.
inline PointCloud wavy_patch(double x0, double x1, double y0, double y1, double spacing = 0.001,
                             double amp = 0.005, double wavelength = 0.03) {
  PointCloud c;
  const double k = 2.0 * std::numbers::pi / wavelength;
  const long i0 = std::lround(std::ceil(x0 / spacing - 1e-9)), i1 = std::lround(std::floor(x1 / spacing + 1e-9));
  const long j0 = std::lround(std::ceil(y0 / spacing - 1e-9)), j1 = std::lround(std::floor(y1 / spacing + 1e-9));
  for (long i = i0; i <= i1; ++i)
    for (long j = j0; j <= j1; ++j) {
      const double x = static_cast<double>(i) * spacing, y = static_cast<double>(j) * spacing;
      const double z = amp * std::sin(k * x) * std::cos(k * y);
      const double dzdx = amp * k * std::cos(k * x) * std::cos(k * y);
      const double dzdy = -amp * k * std::sin(k * x) * std::sin(k * y);
      c.points.emplace_back(x, y, z);
      c.normals.push_back(Vec3(-dzdx, -dzdy, 1.0).normalized());
    }
  return c;
}

/// Two parallel square faces at x = -gap/2 (normal -x) and x = +gap/2
/// (normal +x), sampled on a (y, z) grid shifted by `phase` * spacing.
inline PointCloud thin_wall(double gap = 0.003, double size = 0.06, double spacing = 0.001, double phase = 0.0) {
  PointCloud c;
  const int n = static_cast<int>(std::lround(size / spacing));
  for (int side = 0; side < 2; ++side) {
    const double x = side == 0 ? -0.5 * gap : 0.5 * gap;
    const Vec3 normal = side == 0 ? Vec3(-Vec3::UnitX()) : Vec3(Vec3::UnitX());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        c.points.emplace_back(x, (i + phase) * spacing, (j + phase) * spacing);
        c.normals.push_back(normal);
      }
  }
  return c;
}

}  // namespace mvfuse::fixtures
