#include "mvfuse/error.hpp"
#include "mvfuse/kdtree.hpp"
#include "mvfuse/shape_synth.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace mvfuse;

TEST_CASE("shape mesh: flat quad") {
  const auto m = make_shape_mesh(ShapeKind::Plane, 1);
  CHECK(m.vertices.size() == 4);
  CHECK(m.triangle_count() == 2);
  for (const auto& v : m.vertices) CHECK(v.z() == 0.0);
  for (std::size_t t = 0; t < 2; ++t) CHECK(m.face_normal(t).z() == doctest::Approx(1.0));
}

TEST_CASE("shape mesh: height functions") {
  CHECK(shape_height(ShapeKind::Slope, 0.0) == 0.0);
  CHECK(shape_height(ShapeKind::Slope, 1.0) == doctest::Approx(0.5));
  CHECK(shape_height(ShapeKind::SineWave, 0.125) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(triangle_wave(0.0) == 0.0);
  CHECK(triangle_wave(0.25) == 1.0);
  CHECK(triangle_wave(0.75) == -1.0);
  CHECK(triangle_wave(0.125) == doctest::Approx(0.5));
  CHECK(shape_height(ShapeKind::TriangularWave, 1.0 / 16.0) == doctest::Approx(0.1));

  const auto m = make_shape_mesh(ShapeKind::SineWave, 16);
  CHECK(m.vertices.size() == 17 * 17);
  CHECK(m.triangle_count() == 2 * 16 * 16);
  const auto box = Aabb::of(m.vertices);
  CHECK(box.min.head<2>() == Eigen::Vector2d(0, 0));
  CHECK(box.max.head<2>() == Eigen::Vector2d(1, 1));
  m.validate();
}

TEST_CASE("sample_surface: plane samples lie on the surface; determinism") {
  const auto m = make_shape_mesh(ShapeKind::Plane, 16);
  const auto a = sample_surface(m, 1000, 42);
  const auto b = sample_surface(m, 1000, 42);
  CHECK(a.points == b.points);
  for (const auto& p : a.points) {
    CHECK(p.z() == 0.0);
    CHECK(p.x() >= 0.0);
    CHECK(p.x() <= 1.0);
    CHECK(p.y() >= 0.0);
    CHECK(p.y() <= 1.0);
  }
  CHECK(sample_surface(m, 1000, 43).points != a.points);
}

TEST_CASE("sample_surface: triangles are picked in proportion to area") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1.0 / 3.0, 0}};
  m.triangles = {{0, 1, 2}, {1, 3, 2}};
  REQUIRE(m.area(0) / m.area(1) == doctest::Approx(3.0));
  const std::size_t n = 100000;
  const auto c = sample_surface(m, n, 7);
  // a sample belongs to triangle 0 iff x + y <= 1
  std::size_t in_big = 0;
  for (const auto& p : c.points) in_big += (p.x() + p.y() <= 1.0);
  const double big = static_cast<double>(in_big);
  const double small = static_cast<double>(n - in_big);
  CHECK(big / small == doctest::Approx(3.0).epsilon(0.02));
  const double e_big = 0.75 * n, e_small = 0.25 * n;
  const double chi2 = (big - e_big) * (big - e_big) / e_big + (small - e_small) * (small - e_small) / e_small;
  CHECK(chi2 < 10.83);  // p = 0.001, one degree of freedom
}

TEST_CASE("metric pair: zero perturbation is an exact 0.5 m lift") {
  for (ShapeKind k : kAllShapes) {
    const auto pair = make_metric_pair(k, {});
    REQUIRE(pair.test.size() == pair.reference.size());
    CHECK(pair.reference.size() == 1000);
    CHECK(pair.gt_distance == 0.5);
    for (std::size_t i = 0; i < pair.test.size(); ++i) {
      CHECK(pair.test.points[i].x() == pair.reference.points[i].x());
      CHECK(pair.test.points[i].y() == pair.reference.points[i].y());
      CHECK(pair.test.points[i].z() == pair.reference.points[i].z() + 0.5);
    }
  }
  // each lifted point sees its own pre-image at 0.5 and nothing closer
  const auto plane = make_metric_pair(ShapeKind::Plane, {});
  KdTree tree(plane.reference.points);
  for (std::size_t i = 0; i < plane.test.size(); ++i) {
    const auto nn = tree.knn(plane.test.points[i], 2);
    CHECK(nn[0].index == i);
    CHECK(std::sqrt(nn[0].distance_sq) == 0.5);
    CHECK(std::sqrt(nn[1].distance_sq) > 0.5);
  }
}

TEST_CASE("metric pair: degenerate perturbations") {
  auto code_of = [](const PerturbationSpec& s) {
    try {
      make_metric_pair(ShapeKind::TriangularWave, s);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ConfigError;
  };
  CHECK(code_of({0, 0, 1.0, 1}) == ErrorCode::DegenerateOutput);
  CHECK(code_of({0, 2.0, 0, 1}) == ErrorCode::DegenerateOutput);
  CHECK(code_of({-0.1, 0, 0, 1}) == ErrorCode::InvalidParameter);
  CHECK(code_of({0, 0, 1.5, 1}) == ErrorCode::InvalidParameter);
}

TEST_CASE("metric pair: monotone hole and sampling counts, seeded determinism") {
  std::size_t prev = 1001;
  for (double r : {0.0, 0.1, 0.2, 0.4, 0.6}) {
    const auto n = make_metric_pair(ShapeKind::SineWave, {0, r, 0, 5}).test.size();
    CHECK(n <= prev);
    prev = n;
  }
  prev = 1001;
  for (double f : {0.0, 0.25, 0.5, 0.9}) {
    const auto n = make_metric_pair(ShapeKind::SineWave, {0, 0, f, 5}).test.size();
    CHECK(n == static_cast<std::size_t>(std::lround((1.0 - f) * 1000)));
    CHECK(n <= prev);
    prev = n;
  }
  const PerturbationSpec s{0.05, 0.3, 0.4, 99};
  CHECK(make_metric_pair(ShapeKind::Slope, s).test.points == make_metric_pair(ShapeKind::Slope, s).test.points);
  // the hole is centred on the cloud: nothing left inside the radius
  const auto holed = make_metric_pair(ShapeKind::Plane, {0, 0.3, 0, 3});
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : holed.reference.points) c += p.head<2>();
  c /= 1000.0;
  for (const auto& p : holed.test.points) CHECK((p.head<2>() - c).norm() >= 0.3);
}

TEST_CASE("icosphere and bunny proxy are valid closed meshes") {
  const auto s = make_icosphere(2);
  CHECK(s.triangle_count() == 320);
  s.validate();
  for (std::size_t t = 0; t < s.triangle_count(); ++t) CHECK(s.face_normal(t).dot(s.face_centroid(t)) > 0.0);
  const auto b = make_bunny_proxy();
  b.validate();
  CHECK(b.centroid().norm() < 1e-12);
  const auto box = Aabb::of(b.vertices);
  CHECK((box.max - box.min).maxCoeff() < 0.25);
  CHECK((box.max - box.min).maxCoeff() > 0.1);
}
