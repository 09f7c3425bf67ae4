#include "mvfuse/assignment.hpp"
#include "mvfuse/cloud_ops.hpp"
#include "mvfuse/delaunay.hpp"
#include "mvfuse/error.hpp"
#include "mvfuse/metrics.hpp"
#include "mvfuse/shape_synth.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace mvfuse;
using mvfuse::testing::cloud_of;
using mvfuse::testing::grid_points;
using mvfuse::testing::random_points;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigError;
}

// Exhaustive minimum over all bijections.
double brute_emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[perm[i]]).norm();
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

double brute_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, int n) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i)
    for (int j = 0; i + j <= n; ++j) {
      const double u = static_cast<double>(i) / n, v = static_cast<double>(j) / n;
      best = std::min(best, (p - (a + u * (b - a) + v * (c - a))).norm());
    }
  return best;
}

double dist_to_parabola_oracle() {
  // minimize x^2 + (x^2 - 1)^2 by golden-section search on [0, 2]
  auto f = [](double x) { return x * x + (x * x - 1) * (x * x - 1); };
  double lo = 0.0, hi = 2.0;
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int i = 0; i < 200; ++i) {
    const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
    (f(m1) < f(m2) ? hi : lo) = f(m1) < f(m2) ? m2 : m1;
  }
  return std::sqrt(f(0.5 * (lo + hi)));
}

}  // namespace

TEST_CASE("chamfer and hausdorff: hand examples") {
  const auto a = cloud_of({{0, 0, 0}});
  const auto b = cloud_of({{1, 0, 0}, {3, 0, 0}});
  CHECK(chamfer(a, b).scalar == doctest::Approx(1.5));
  CHECK(chamfer(b, a).scalar == doctest::Approx(1.5));
  CHECK(chamfer(a, b, true).scalar == doctest::Approx(0.5 * (1.0 + 5.0)));
  CHECK(hausdorff(a, b).scalar == 3.0);
  CHECK(hausdorff(b, a).scalar == 3.0);
  CHECK(chamfer(b, b).scalar == 0.0);
  CHECK(hausdorff(b, b).scalar == 0.0);
  CHECK(code_of([&] { chamfer(PointCloud{}, a); }) == ErrorCode::EmptyInput);
  CHECK(code_of([&] { hausdorff(a, PointCloud{}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("hausdorff: directed part vanishes exactly on subsets") {
  const auto pts = random_points(200, 3);
  const auto sub = cloud_of(std::vector<Vec3>(pts.begin(), pts.begin() + 80));
  const auto all = cloud_of(pts);
  const auto r = hausdorff(sub, all);
  CHECK(*std::max_element(r.per_point.begin(), r.per_point.end()) == 0.0);
  CHECK(r.scalar > 0.0);
  auto moved = sub;
  moved.points[5].x() += 1e-6;
  const auto r2 = hausdorff(moved, all);
  CHECK(*std::max_element(r2.per_point.begin(), r2.per_point.end()) > 0.0);
}

TEST_CASE("assignment: optimal against enumeration") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 7;
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = u(rng);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += cost(i, perm[i]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto a = solve_assignment(cost);
    CHECK(a.cost == doctest::Approx(best).epsilon(1e-12));
    std::vector<std::size_t> cols = a.column_of_row;
    std::sort(cols.begin(), cols.end());
    for (int i = 0; i < n; ++i) CHECK(cols[i] == static_cast<std::size_t>(i));
  }
}

TEST_CASE("earth mover's: hand examples, oracle, errors") {
  CHECK(earth_movers(cloud_of({{0, 0, 0}, {2, 0, 0}}), cloud_of({{1, 0, 0}, {3, 0, 0}})).scalar ==
        doctest::Approx(1.0));
  const auto pts = random_points(50, 7);
  CHECK(earth_movers(cloud_of(pts), cloud_of(pts)).scalar == 0.0);
  auto lifted = pts;
  for (auto& p : lifted) p.z() += 0.5;
  CHECK(earth_movers(cloud_of(pts), cloud_of(lifted)).scalar == doctest::Approx(0.5).epsilon(1e-12));
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + trial % 7;
    const auto a = random_points(n, 100 + trial), b = random_points(n, 200 + trial);
    CHECK(std::abs(earth_movers(cloud_of(a), cloud_of(b)).scalar - brute_emd(a, b)) < 1e-9);
  }
  CHECK(code_of([&] { earth_movers(cloud_of(pts), cloud_of(random_points(49, 1))); }) == ErrorCode::SizeMismatch);
  MetricOptions small;
  small.emd_max_points = 10;
  CHECK(code_of([&] { earth_movers(cloud_of(pts), cloud_of(pts), small); }) == ErrorCode::TooLarge);
}

TEST_CASE("earth mover's is never below chamfer on equal sizes") {
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = cloud_of(random_points(60, 300 + trial)), b = cloud_of(random_points(60, 400 + trial, 0.2, 1.3));
    CHECK(earth_movers(a, b).scalar >= chamfer(a, b).scalar - 1e-12);
  }
}

TEST_CASE("lsq plane: exact plane, on-surface query, SVD oracle on a noisy plane") {
  const auto ref = cloud_of(grid_points(20, 0.05));
  const auto above = cloud_of(grid_points(20, 0.05, 0.5));
  const auto r = plane_distance_lsq(above, ref, 20);
  for (double d : r.per_point) CHECK(std::abs(d - 0.5) < 1e-9);
  const auto on = plane_distance_lsq(cloud_of({{0.33, 0.41, 0.0}}), ref, 20);
  CHECK(on.per_point[0] < 1e-9);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.01);
  auto pts = grid_points(30, 0.03);
  for (auto& p : pts) p.z() += noise(rng);
  const auto noisy = cloud_of(pts);
  const auto queries = random_points(40, 5, 0.0, 0.9);
  const auto got = plane_distance_lsq(cloud_of(queries), noisy, 20);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto nn = testing::brute_knn(pts, queries[i], 20);
    Eigen::MatrixXd centered(20, 3);
    Vec3 c = Vec3::Zero();
    for (const auto& [d, idx] : nn) c += pts[idx];
    c /= 20.0;
    for (int j = 0; j < 20; ++j) centered.row(j) = (pts[nn[j].second] - c).transpose();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);
    const Vec3 n = svd.matrixV().col(2);
    CHECK(std::abs(got.per_point[i] - std::abs(n.dot(queries[i] - c))) < 1e-9);
  }
}

TEST_CASE("point-to-plane metrics: parameter checks and degenerate neighborhoods") {
  const auto ref = cloud_of(grid_points(5, 0.1));
  const auto q = cloud_of({{0.2, 0.2, 0.3}});
  CHECK(code_of([&] { plane_distance_quadratic(q, ref, 5); }) == ErrorCode::InvalidParameter);
  CHECK(code_of([&] { plane_distance_lsq(q, ref, 2); }) == ErrorCode::InvalidParameter);
  CHECK(code_of([&] { plane_distance_triangulation(q, cloud_of(grid_points(1, 0.1)), 3); }) ==
        ErrorCode::InsufficientPoints);
  std::vector<Vec3> line;
  for (int i = 0; i < 30; ++i) line.emplace_back(0.01 * i, 0.0, 0.0);
  for (int i = 0; i < 30; ++i) line.emplace_back(5.0 + 0.1 * (i % 6), 0.1 * (i / 6), 0.0);
  const auto mixed = cloud_of(line);
  const auto queries = cloud_of({{0.1, 0.05, 0.2}, {5.2, 0.2, 0.3}});
  for (const auto& r : {plane_distance_lsq(queries, mixed, 10), plane_distance_triangulation(queries, mixed, 10),
                        plane_distance_quadratic(queries, mixed, 10)}) {
    CHECK(std::isnan(r.per_point[0]));
    CHECK(r.flagged == 1);
    CHECK(r.mean == doctest::Approx(0.3));
    CHECK(r.histogram.counts.size() == 32);
    CHECK(std::accumulate(r.histogram.counts.begin(), r.histogram.counts.end(), std::size_t{0}) == 1);
  }
  CHECK(code_of([&] { plane_distance_triangulation(cloud_of({{0.1, 0.05, 0.2}}), mixed, 10); }) ==
        ErrorCode::CollinearNeighborhood);
}

TEST_CASE("quadratic: plane degenerates to lsq; distance to a parabola") {
  const auto ref = cloud_of(grid_points(20, 0.05));
  const auto queries = cloud_of(random_points(50, 9, 0.0, 0.95));
  const auto lsq = plane_distance_lsq(queries, ref, 20);
  const auto quad = plane_distance_quadratic(queries, ref, 20);
  CHECK(quad.fallbacks == 0);
  for (std::size_t i = 0; i < queries.size(); ++i) CHECK(std::abs(lsq.per_point[i] - quad.per_point[i]) < 1e-9);

  // symmetric grid on z = x^2 over [-1, 1]^2, neighborhood = all of it
  std::vector<Vec3> parabola;
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j) parabola.emplace_back(0.05 * i, 0.05 * j, 0.0025 * i * i);
  const auto r = plane_distance_quadratic(cloud_of({{0, 0, 1}}), cloud_of(parabola), parabola.size());
  const double oracle = dist_to_parabola_oracle();
  CHECK(oracle == doctest::Approx(std::sqrt(0.75)).epsilon(1e-12));
  CHECK(std::abs(r.per_point[0] - oracle) < 1e-9);
}

TEST_CASE("delaunay: empty circumcircles and triangle count") {
  for (int trial = 0; trial < 200; ++trial) {
    std::mt19937_64 rng(50 + trial);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec2> pts(4 + trial % 60);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const auto tris = delaunay_triangulate(pts);
    for (const auto& t : tris) {
      const Vec2 &a = pts[t[0]], &b = pts[t[1]], &c = pts[t[2]];
      CHECK((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x() > 0.0);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        if (k == t[0] || k == t[1] || k == t[2]) continue;
        CHECK(in_circle(a, b, c, pts[k]) <= 1e-12);
      }
    }
    // 2n - 2 - h triangles for points in general position
    std::vector<Vec2> sorted = pts;
    std::sort(sorted.begin(), sorted.end(), [](const Vec2& p, const Vec2& q) {
      return p.x() < q.x() || (p.x() == q.x() && p.y() < q.y());
    });
    auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
      return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x();
    };
    std::vector<Vec2> hull(2 * sorted.size());
    std::size_t h = 0;
    for (const auto& p : sorted) {
      while (h >= 2 && cross(hull[h - 2], hull[h - 1], p) <= 0) --h;
      hull[h++] = p;
    }
    for (std::size_t i = sorted.size() - 1, lower = h + 1; i-- > 0;) {
      while (h >= lower && cross(hull[h - 2], hull[h - 1], sorted[i]) <= 0) --h;
      hull[h++] = sorted[i];
    }
    --h;
    CHECK(tris.size() == 2 * pts.size() - 2 - h);
  }
  const std::vector<Vec2> collinear{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK(delaunay_triangulate(collinear).empty());
  const std::vector<Vec2> dup{{0, 0}, {1, 0}, {0, 1}, {1, 0}};
  CHECK(delaunay_triangulate(dup).size() == 1);
}

TEST_CASE("triangulation metric: plane fixture and unit square") {
  const auto ref = cloud_of(grid_points(20, 0.05));
  const auto r = plane_distance_triangulation(cloud_of(grid_points(20, 0.05, 0.5)), ref, 12);
  for (double d : r.per_point) CHECK(std::abs(d - 0.5) < 1e-9);
  const auto square = cloud_of({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}});
  CHECK(plane_distance_triangulation(cloud_of({{0.5, 0.5, 0.7}}), square, 4).per_point[0] ==
        doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("cloud to mesh: sign, edge case against a sampling oracle, own vertices") {
  const auto plane = make_shape_mesh(ShapeKind::Plane, 4);
  const auto r = cloud_to_mesh(cloud_of({{0.3, 0.6, 0.1}, {0.3, 0.6, -0.1}}), plane);
  CHECK(r.per_point[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(r.per_point[1] == doctest::Approx(-0.1).epsilon(1e-15));

  TriangleMesh tri;
  tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  tri.triangles = {{0, 1, 2}};
  const Vec3 p(2, 0.5, 1);
  const double got = cloud_to_mesh(cloud_of({p}), tri).per_point[0];
  const int n = 400;
  const double oracle = brute_triangle_distance(p, tri.vertices[0], tri.vertices[1], tri.vertices[2], n);
  CHECK(got == doctest::Approx(1.5));
  CHECK(got <= oracle + 1e-12);
  CHECK(oracle - got < std::sqrt(2.0) / n);

  const auto bunny = make_bunny_proxy(2);
  PointCloud verts;
  verts.points = bunny.vertices;
  for (double d : cloud_to_mesh(verts, bunny).per_point) CHECK(std::abs(d) < 1e-9);
  CHECK(code_of([&] { cloud_to_mesh(verts, TriangleMesh{}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("fit_gaussian and histogram") {
  DistanceReport r;
  r.per_point = {0.5, 0.5, 0.5};
  auto g = fit_gaussian(r);
  CHECK(g.mean == 0.5);
  CHECK(g.std == 0.0);
  r.per_point = {-1.0, 1.0};
  g = fit_gaussian(r);
  CHECK(g.mean == 0.0);
  CHECK(g.std == doctest::Approx(std::sqrt(2.0)));
  r.per_point = {1.0, std::nan("")};
  CHECK(code_of([&] { fit_gaussian(r); }) == ErrorCode::InsufficientData);

  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.2, 0.05);
  r.per_point.resize(100000);
  for (auto& v : r.per_point) v = nd(rng);
  g = fit_gaussian(r);
  CHECK(std::abs(g.mean - 0.2) < 0.001);
  CHECK(std::abs(g.std - 0.05) < 0.002);
  const auto h = histogram(r.per_point, 50);
  CHECK(h.bin_edges.size() == 51);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == r.per_point.size());
  CHECK(h.bin_edges.front() == *std::min_element(r.per_point.begin(), r.per_point.end()));
  CHECK(h.bin_edges.back() == *std::max_element(r.per_point.begin(), r.per_point.end()));
}

TEST_CASE("every metric is invariant under a joint rigid motion") {
  PerturbationSpec spec;
  spec.noise_std = 0.01;
  spec.seed = 3;
  const auto pair = make_metric_pair(ShapeKind::SineWave, spec, 300);
  const RigidTransform t(so3_exp(Vec3(0.4, -0.7, 1.1)), {2.0, -1.0, 0.5});
  const auto q2 = apply_transform(pair.test, t), r2 = apply_transform(pair.reference, t);
  TriangleMesh m2 = pair.mesh;
  for (auto& v : m2.vertices) v = t.apply(v);
  for (MetricKind kind : kAllMetrics) {
    const auto a = measure(kind, pair.test, pair.reference, &pair.mesh);
    const auto b = measure(kind, q2, r2, &m2);
    CHECK_MESSAGE(std::abs(a.scalar - b.scalar) < 1e-9, to_string(kind));
  }
}

TEST_CASE("zero-perturbation fixtures") {
  for (ShapeKind shape : kAllShapes) {
    const auto pair = make_metric_pair(shape, {});
    for (MetricKind kind : kAllMetrics) {
      const auto r = measure(kind, pair.test, pair.reference, &pair.mesh);
      CAPTURE(to_string(shape));
      CAPTURE(to_string(kind));
      if (kind != MetricKind::EarthMovers) {
        CHECK(r.per_point.size() == pair.test.size());
        CHECK(r.flagged == 0);
        CHECK(std::accumulate(r.histogram.counts.begin(), r.histogram.counts.end(), std::size_t{0}) ==
              pair.test.size());
      }
      if (shape == ShapeKind::Plane) {
        CHECK(std::abs(r.scalar - 0.5) < (kind == MetricKind::PlaneQuadratic ? 1e-7 : 1e-9));
      } else {
        // each lifted point's own pre-image sits at exactly 0.5
        CHECK(r.scalar <= 0.5 + 1e-12);
        CHECK(r.scalar > 0.0);
      }
    }
  }
}

TEST_CASE("metric names round-trip") {
  for (MetricKind k : kAllMetrics) CHECK(parse_metric_kind(to_string(k)) == k);
  CHECK_FALSE(parse_metric_kind("nope").has_value());
}
