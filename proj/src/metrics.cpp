#include "mvfuse/metrics.hpp"

#include "mvfuse/assignment.hpp"
#include "mvfuse/cloud_ops.hpp"
#include "mvfuse/delaunay.hpp"
#include "mvfuse/error.hpp"
#include "mvfuse/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mvfuse {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_points(const PointCloud& cloud, const char* what) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyInput, std::string(what) + " cloud is empty");
}

std::vector<double> finite_values(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values)
    if (std::isfinite(v)) out.push_back(v);
  return out;
}

double mean_of(std::span<const double> values) {
  return pairwise_sum(values) / static_cast<double>(values.size());
}

double sample_std(std::span<const double> values, double mean) {
  if (values.size() < 2) return 0.0;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size() - 1));
}

// Fills mean/std/histogram/flagged from per_point; scalar defaults to the mean.
void summarize(DistanceReport& r, const MetricOptions& options) {
  const auto finite = finite_values(r.per_point);
  r.flagged = r.per_point.size() - finite.size();
  if (finite.empty()) {
    r.mean = r.std = r.scalar = kNaN;
    return;
  }
  r.mean = mean_of(finite);
  r.std = sample_std(finite, r.mean);
  r.scalar = r.mean;
  r.histogram = histogram(finite, options.bins);
}

std::vector<double> directed_nn(const PointCloud& from, const KdTree& to, bool squared) {
  std::vector<double> d(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    const double d2 = to.nearest(from.points[i]).distance_sq;
    d[i] = squared ? d2 : std::sqrt(d2);
  }
  return d;
}

void check_k(const PointCloud& query, const PointCloud& reference, std::size_t k, std::size_t min_k) {
  require_points(query, "query");
  require_points(reference, "reference");
  if (k < min_k)
    throw Error(ErrorCode::InvalidParameter, "k = " + std::to_string(k) + " is below the minimum " + std::to_string(min_k));
  if (reference.size() < k)
    throw Error(ErrorCode::InsufficientPoints, "reference has fewer than k = " + std::to_string(k) + " points");
}

std::vector<Vec3> neighborhood(const KdTree& tree, const Vec3& q, std::size_t k) {
  std::vector<Vec3> hood;
  hood.reserve(k);
  for (const auto& nb : tree.knn(q, k)) hood.push_back(tree.point(nb.index));
  return hood;
}

// Rank >= 2: the neighbors span a plane.
bool spans_plane(const PlaneFit& fit) {
  return fit.eigenvalues[2] > 0.0 && fit.eigenvalues[1] > 1e-12 * fit.eigenvalues[2];
}

void throw_if_all_flagged(const DistanceReport& r, const char* what) {
  if (!r.per_point.empty() && r.flagged == r.per_point.size())
    throw Error(ErrorCode::CollinearNeighborhood, std::string(what) + ": every neighborhood is degenerate");
}

// z = a x^2 + b xy + c y^2 + d x + e y + f in a local frame.
struct Quadric {
  double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;

  double h(double x, double y) const { return a * x * x + b * x * y + c * y * y + d * x + e * y + f; }
  double hx(double x, double y) const { return 2 * a * x + b * y + d; }
  double hy(double x, double y) const { return b * x + 2 * c * y + e; }
};

// Closest point of the height field to q by damped Newton from one start.
double quadric_distance_sq(const Quadric& s, const Vec3& q, double x, double y) {
  auto value = [&](double u, double v) {
    const double dz = s.h(u, v) - q.z();
    return (u - q.x()) * (u - q.x()) + (v - q.y()) * (v - q.y()) + dz * dz;
  };
  double f = value(x, y);
  double lambda = 1e-6;
  for (int it = 0; it < 100; ++it) {
    const double r = s.h(x, y) - q.z();
    const double gx = s.hx(x, y), gy = s.hy(x, y);
    const Eigen::Vector2d grad((x - q.x()) + r * gx, (y - q.y()) + r * gy);
    Eigen::Matrix2d hess;
    hess << 1 + gx * gx + r * 2 * s.a, gx * gy + r * s.b, gx * gy + r * s.b, 1 + gy * gy + r * 2 * s.c;
    bool improved = false;
    Eigen::Vector2d step = Eigen::Vector2d::Zero();
    while (lambda < 1e12) {
      const Eigen::Matrix2d damped = hess + lambda * Eigen::Matrix2d::Identity();
      const Eigen::LDLT<Eigen::Matrix2d> ldlt(damped);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = -ldlt.solve(grad);
        const double trial = value(x + step.x(), y + step.y());
        if (trial <= f) {
          improved = trial < f;
          x += step.x();
          y += step.y();
          f = trial;
          lambda = std::max(lambda * 0.1, 1e-12);
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!improved || step.norm() < 1e-15) break;
  }
  return f;
}

}  // namespace

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::Chamfer: return "chamfer";
    case MetricKind::Hausdorff: return "hausdorff";
    case MetricKind::EarthMovers: return "earth-movers";
    case MetricKind::PlaneLsq: return "plane-lsq";
    case MetricKind::PlaneQuadratic: return "plane-quadratic";
    case MetricKind::PlaneTriangulation: return "plane-triangulation";
    case MetricKind::CloudToMesh: return "cloud-to-mesh";
  }
  return "unknown";
}

std::optional<MetricKind> parse_metric_kind(std::string_view name) {
  for (MetricKind k : kAllMetrics)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::InvalidParameter, "histogram needs at least one bin");
  Histogram h;
  const auto finite = finite_values(values);
  if (finite.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(finite.begin(), finite.end());
  const double lo = *lo_it;
  double hi = *hi_it;
  if (hi <= lo) hi = lo + std::max(1.0, std::abs(lo)) * 1e-12;
  const double width = (hi - lo) / static_cast<double>(bins);
  h.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
  h.bin_edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double v : finite) {
    auto idx = static_cast<std::size_t>((v - lo) / width);
    ++h.counts[std::min(idx, bins - 1)];
  }
  return h;
}

DistanceReport chamfer(const PointCloud& a, const PointCloud& b, bool squared, const MetricOptions& options) {
  require_points(a, "first");
  require_points(b, "second");
  const KdTree ta(a), tb(b);
  DistanceReport r;
  r.kind = MetricKind::Chamfer;
  r.squared = squared;
  r.per_point = directed_nn(a, tb, squared);
  const auto back = directed_nn(b, ta, squared);
  summarize(r, options);
  r.scalar = 0.5 * (mean_of(r.per_point) + mean_of(back));
  return r;
}

DistanceReport hausdorff(const PointCloud& a, const PointCloud& b, const MetricOptions& options) {
  require_points(a, "first");
  require_points(b, "second");
  const KdTree ta(a), tb(b);
  DistanceReport r;
  r.kind = MetricKind::Hausdorff;
  r.per_point = directed_nn(a, tb, false);
  const auto back = directed_nn(b, ta, false);
  summarize(r, options);
  r.scalar = std::max(*std::max_element(r.per_point.begin(), r.per_point.end()),
                      *std::max_element(back.begin(), back.end()));
  return r;
}

DistanceReport earth_movers(const PointCloud& a, const PointCloud& b, const MetricOptions& options) {
  require_points(a, "first");
  require_points(b, "second");
  if (a.size() != b.size())
    throw Error(ErrorCode::SizeMismatch, "earth mover's distance needs equal sizes (" + std::to_string(a.size()) +
                                             " vs " + std::to_string(b.size()) + ")");
  if (a.size() > options.emd_max_points)
    throw Error(ErrorCode::TooLarge, std::to_string(a.size()) + " points exceed the cap of " +
                                         std::to_string(options.emd_max_points));
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (a.points[i] - b.points[j]).norm();
  const Assignment match = solve_assignment(cost);
  std::vector<double> pair_cost(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) pair_cost[i] = (a.points[i] - b.points[match.column_of_row[i]]).norm();
  DistanceReport r;
  r.kind = MetricKind::EarthMovers;
  r.scalar = r.mean = mean_of(pair_cost);
  return r;
}

DistanceReport plane_distance_lsq(const PointCloud& query, const PointCloud& reference, std::size_t k,
                                  const MetricOptions& options) {
  check_k(query, reference, k, 3);
  const KdTree tree(reference);
  DistanceReport r;
  r.kind = MetricKind::PlaneLsq;
  r.per_point.resize(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    const Vec3& q = query.points[i];
    const auto hood = neighborhood(tree, q, k);
    const PlaneFit fit = fit_plane(hood);
    r.per_point[i] = spans_plane(fit) ? std::abs(fit.normal.dot(q - fit.centroid)) : kNaN;
  }
  summarize(r, options);
  throw_if_all_flagged(r, "plane-lsq");
  return r;
}

DistanceReport plane_distance_quadratic(const PointCloud& query, const PointCloud& reference, std::size_t k,
                                        const MetricOptions& options) {
  check_k(query, reference, k, 6);
  const KdTree tree(reference);
  DistanceReport r;
  r.kind = MetricKind::PlaneQuadratic;
  r.per_point.resize(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    const Vec3& q = query.points[i];
    const auto hood = neighborhood(tree, q, k);
    const PlaneFit fit = fit_plane(hood);
    if (!spans_plane(fit)) {
      r.per_point[i] = kNaN;
      continue;
    }
    // Local frame: x, y along the in-plane axes, z along the normal.
    Mat3 frame;
    frame.row(0) = fit.basis.col(2).transpose();
    frame.row(1) = fit.basis.col(1).transpose();
    frame.row(2) = fit.normal.transpose();
    std::vector<Vec3> local(hood.size());
    double radius = 0.0;
    for (std::size_t j = 0; j < hood.size(); ++j) {
      local[j] = frame * (hood[j] - fit.centroid);
      radius = std::max({radius, std::abs(local[j].x()), std::abs(local[j].y())});
    }
    // Fit in coordinates scaled to [-1, 1] so the condition number is geometric.
    const auto rows = static_cast<Eigen::Index>(hood.size());
    Eigen::MatrixXd design(rows, 6);
    Eigen::VectorXd rhs(rows);
    for (Eigen::Index j = 0; j < rows; ++j) {
      const double x = local[j].x() / radius, y = local[j].y() / radius;
      design.row(j) << x * x, x * y, y * y, x, y, 1.0;
      rhs[j] = local[j].z();
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const Vec3 ql = frame * (q - fit.centroid);
    if (sv[5] <= 0.0 || sv[0] / sv[5] > options.quadric_max_condition) {
      ++r.fallbacks;
      r.per_point[i] = std::abs(ql.z());
      continue;
    }
    const Eigen::VectorXd coef = svd.solve(rhs);
    const double r2 = radius * radius;
    const Quadric s{coef[0] / r2, coef[1] / r2, coef[2] / r2, coef[3] / radius, coef[4] / radius, coef[5]};
    double best = quadric_distance_sq(s, ql, ql.x(), ql.y());
    for (const auto& p : local) best = std::min(best, quadric_distance_sq(s, ql, p.x(), p.y()));
    r.per_point[i] = std::sqrt(best);
  }
  summarize(r, options);
  throw_if_all_flagged(r, "plane-quadratic");
  return r;
}

DistanceReport plane_distance_triangulation(const PointCloud& query, const PointCloud& reference, std::size_t k,
                                            const MetricOptions& options) {
  check_k(query, reference, k, 3);
  const KdTree tree(reference);
  DistanceReport r;
  r.kind = MetricKind::PlaneTriangulation;
  r.per_point.resize(query.size());
  std::vector<Vec2> flat;
  for (std::size_t i = 0; i < query.size(); ++i) {
    const Vec3& q = query.points[i];
    const auto hood = neighborhood(tree, q, k);
    const PlaneFit fit = fit_plane(hood);
    if (!spans_plane(fit)) {
      r.per_point[i] = kNaN;
      continue;
    }
    flat.clear();
    for (const auto& p : hood) {
      const Vec3 d = p - fit.centroid;
      flat.emplace_back(d.dot(fit.basis.col(2)), d.dot(fit.basis.col(1)));
    }
    const auto tris = delaunay_triangulate(flat);
    if (tris.empty()) {
      r.per_point[i] = kNaN;
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : tris)
      best = std::min(best, (q - closest_point_on_triangle(q, hood[t[0]], hood[t[1]], hood[t[2]])).squaredNorm());
    r.per_point[i] = std::sqrt(best);
  }
  summarize(r, options);
  throw_if_all_flagged(r, "plane-triangulation");
  return r;
}

DistanceReport cloud_to_mesh(const PointCloud& query, const Bvh& bvh, const MetricOptions& options) {
  require_points(query, "query");
  if (bvh.mesh().empty()) throw Error(ErrorCode::EmptyInput, "mesh has no triangles");
  DistanceReport r;
  r.kind = MetricKind::CloudToMesh;
  r.per_point.resize(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    const Vec3& p = query.points[i];
    const ClosestTriangle c = bvh.closest(p);
    const double side = (p - c.point).dot(bvh.mesh().face_normal(c.triangle));
    const double d = std::sqrt(c.distance_sq);
    r.per_point[i] = side < 0.0 ? -d : d;
  }
  summarize(r, options);
  return r;
}

DistanceReport cloud_to_mesh(const PointCloud& query, const TriangleMesh& mesh, const MetricOptions& options) {
  if (mesh.empty()) throw Error(ErrorCode::EmptyInput, "mesh has no triangles");
  return cloud_to_mesh(query, Bvh(mesh), options);
}

DistanceReport measure(MetricKind kind, const PointCloud& query, const PointCloud& reference, const TriangleMesh* mesh,
                       const MetricOptions& options) {
  const auto k_or = [&](std::size_t fallback) { return options.k == 0 ? fallback : options.k; };
  switch (kind) {
    case MetricKind::Chamfer: return chamfer(query, reference, options.squared, options);
    case MetricKind::Hausdorff: return hausdorff(query, reference, options);
    case MetricKind::EarthMovers: return earth_movers(query, reference, options);
    case MetricKind::PlaneLsq: return plane_distance_lsq(query, reference, k_or(kDefaultPlaneK), options);
    case MetricKind::PlaneQuadratic: return plane_distance_quadratic(query, reference, k_or(kDefaultPlaneK), options);
    case MetricKind::PlaneTriangulation:
      return plane_distance_triangulation(query, reference, k_or(kDefaultTriangulationK), options);
    case MetricKind::CloudToMesh:
      if (mesh == nullptr) throw Error(ErrorCode::InvalidParameter, "cloud-to-mesh needs a mesh");
      return cloud_to_mesh(query, *mesh, options);
  }
  throw Error(ErrorCode::InvalidParameter, "unknown metric");
}

GaussianFit fit_gaussian(const DistanceReport& report) {
  const auto finite = finite_values(report.per_point);
  if (finite.size() < 2)
    throw Error(ErrorCode::InsufficientData, "a Gaussian fit needs at least 2 finite distances");
  GaussianFit g;
  g.mean = mean_of(finite);
  g.std = sample_std(finite, g.mean);
  return g;
}

}  // namespace mvfuse
