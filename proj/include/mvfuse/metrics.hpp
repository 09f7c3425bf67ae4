#pragma once

#include "mvfuse/bvh.hpp"
#include "mvfuse/types.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mvfuse {

enum class MetricKind { Chamfer, Hausdorff, EarthMovers, PlaneLsq, PlaneQuadratic, PlaneTriangulation, CloudToMesh };

inline constexpr MetricKind kAllMetrics[] = {MetricKind::Chamfer,          MetricKind::Hausdorff,
                                             MetricKind::EarthMovers,      MetricKind::PlaneLsq,
                                             MetricKind::PlaneQuadratic,   MetricKind::PlaneTriangulation,
                                             MetricKind::CloudToMesh};

std::string_view to_string(MetricKind kind);
std::optional<MetricKind> parse_metric_kind(std::string_view name);

struct Histogram {
  std::vector<double> bin_edges;  // counts.size() + 1 entries
  std::vector<std::size_t> counts;
};

/// `bins` equal bins over [min, max] of the finite values; NaNs are skipped.
Histogram histogram(std::span<const double> values, std::size_t bins = 32);

struct DistanceReport {
  MetricKind kind = MetricKind::Chamfer;
  /// One entry per query point (empty for Earth Mover's). NaN marks a point
  /// whose neighborhood was degenerate.
  std::vector<double> per_point;
  double scalar = 0.0;
  double mean = 0.0;
  double std = 0.0;
  Histogram histogram;
  std::size_t flagged = 0;    // NaN entries in per_point
  std::size_t fallbacks = 0;  // quadric fits replaced by the plane fit
  bool squared = false;
};

struct MetricOptions {
  std::size_t k = 0;  // 0 picks the per-metric default
  bool squared = false;
  std::size_t emd_max_points = 2048;
  std::size_t bins = 32;
  double quadric_max_condition = 1e10;
};

inline constexpr std::size_t kDefaultPlaneK = 20;
inline constexpr std::size_t kDefaultTriangulationK = 12;

/// Symmetric: half the sum of both directed mean nearest-neighbor distances.
/// per_point holds the a -> b distances.
DistanceReport chamfer(const PointCloud& a, const PointCloud& b, bool squared = false,
                       const MetricOptions& options = {});
/// max of both directed maxima; per_point holds the a -> b distances.
DistanceReport hausdorff(const PointCloud& a, const PointCloud& b, const MetricOptions& options = {});
/// Mean cost of the optimal bijection; exact, capped at options.emd_max_points.
DistanceReport earth_movers(const PointCloud& a, const PointCloud& b, const MetricOptions& options = {});

DistanceReport plane_distance_lsq(const PointCloud& query, const PointCloud& reference,
                                  std::size_t k = kDefaultPlaneK, const MetricOptions& options = {});
/// Distance to a quadric height field fitted in the local plane frame of the
/// k nearest neighbors.
DistanceReport plane_distance_quadratic(const PointCloud& query, const PointCloud& reference,
                                        std::size_t k = kDefaultPlaneK, const MetricOptions& options = {});
/// Distance to the local 2.5D Delaunay mesh of the k nearest neighbors.
DistanceReport plane_distance_triangulation(const PointCloud& query, const PointCloud& reference,
                                            std::size_t k = kDefaultTriangulationK,
                                            const MetricOptions& options = {});
/// Signed: positive on the side the closest triangle's normal points to.
DistanceReport cloud_to_mesh(const PointCloud& query, const TriangleMesh& mesh, const MetricOptions& options = {});
DistanceReport cloud_to_mesh(const PointCloud& query, const Bvh& bvh, const MetricOptions& options = {});

/// Dispatch by kind. CloudToMesh needs `mesh`; the others use `reference`.
DistanceReport measure(MetricKind kind, const PointCloud& query, const PointCloud& reference,
                       const TriangleMesh* mesh, const MetricOptions& options = {});

struct GaussianFit {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample mean and unbiased standard deviation of the finite per-point values.
GaussianFit fit_gaussian(const DistanceReport& report);

/// Pairwise (tree) summation; the order is fixed by the input order.
double pairwise_sum(std::span<const double> values);

}  // namespace mvfuse
