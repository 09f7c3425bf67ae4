#pragma once

#include "mvfuse/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mvfuse {

enum class ShapeKind { Plane, Slope, SineWave, TriangularWave };

inline constexpr ShapeKind kAllShapes[] = {ShapeKind::Plane, ShapeKind::Slope, ShapeKind::SineWave,
                                           ShapeKind::TriangularWave};

std::string_view to_string(ShapeKind kind);
std::optional<ShapeKind> parse_shape_kind(std::string_view name);

/// Height-function constants; all lengths in meters.
struct ShapeParams {
  double slope_rise = 0.5;
  double sine_amplitude = 0.1;
  double sine_cycles = 2.0;
  double triangle_amplitude = 0.1;
  double triangle_cycles = 4.0;
};

/// z = f(x) over the unit square; the shapes vary along x only.
double shape_height(ShapeKind kind, double x, const ShapeParams& params = {});

/// Unit triangle wave with period 1: 0 at u = 0, +1 at 1/4, -1 at 3/4.
double triangle_wave(double u);

/// segments x segments quad grid over [0,1]^2, two triangles per quad.
TriangleMesh make_shape_mesh(ShapeKind kind, int segments = 16, const ShapeParams& params = {});

/// Area-uniform samples with face normals attached.
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

struct PerturbationSpec {
  double noise_std = 0.0;        // meters, isotropic per coordinate
  double hole_radius = 0.0;      // meters, measured in x/y from the cloud centroid
  double sampling_factor = 0.0;  // 0 keeps every point, 1 keeps none
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricPair {
  PointCloud reference;
  PointCloud test;
  double gt_distance = 0.5;
  TriangleMesh mesh;
};

inline constexpr double kMetricOffset = 0.5;

/// Reference = surface samples; test = a copy shifted +0.5 m in z, then hole
/// removal, noise and subsampling (in that order).
MetricPair make_metric_pair(ShapeKind kind, const PerturbationSpec& spec, std::size_t samples = 1000,
                            int segments = 16, const ShapeParams& params = {});

/// Closed icosphere (radius 1, centered at the origin).
TriangleMesh make_icosphere(int subdivisions);

/// Procedural stand-in for the bunny: ellipsoid body, head, tail and two thin
/// ears, about 0.17 m long, centered on its surface centroid.
TriangleMesh make_bunny_proxy(int subdivisions = 3);

}  // namespace mvfuse
