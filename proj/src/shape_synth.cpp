#include "mvfuse/shape_synth.hpp"

#include "mvfuse/error.hpp"
#include "mvfuse/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

namespace mvfuse {

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Plane: return "plane";
    case ShapeKind::Slope: return "slope";
    case ShapeKind::SineWave: return "sine";
    case ShapeKind::TriangularWave: return "triangle";
  }
  return "unknown";
}

std::optional<ShapeKind> parse_shape_kind(std::string_view name) {
  for (ShapeKind k : kAllShapes)
    if (to_string(k) == name) return k;
  if (name == "sine-wave" || name == "sinewave") return ShapeKind::SineWave;
  if (name == "triangular-wave" || name == "triangular") return ShapeKind::TriangularWave;
  return std::nullopt;
}

double triangle_wave(double u) {
  const double f = u + 0.25 - std::floor(u + 0.25);
  return 1.0 - 4.0 * std::abs(f - 0.5);
}

double shape_height(ShapeKind kind, double x, const ShapeParams& p) {
  switch (kind) {
    case ShapeKind::Plane: return 0.0;
    case ShapeKind::Slope: return p.slope_rise * x;
    case ShapeKind::SineWave: return p.sine_amplitude * std::sin(2.0 * std::numbers::pi * p.sine_cycles * x);
    case ShapeKind::TriangularWave: return p.triangle_amplitude * triangle_wave(p.triangle_cycles * x);
  }
  return 0.0;
}

TriangleMesh make_shape_mesh(ShapeKind kind, int segments, const ShapeParams& params) {
  if (segments < 1) throw Error(ErrorCode::InvalidParameter, "segments must be >= 1");
  TriangleMesh mesh;
  const int n = segments + 1;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) / segments;
      const double y = static_cast<double>(j) / segments;
      mesh.vertices.emplace_back(x, y, shape_height(kind, x, params));
    }
  }
  auto id = [n](int i, int j) { return static_cast<std::uint32_t>(j * n + i); };
  for (int j = 0; j < segments; ++j) {
    for (int i = 0; i < segments; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return mesh;
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw Error(ErrorCode::EmptyInput, "cannot sample an empty mesh");
  if (n < 1) throw Error(ErrorCode::InvalidParameter, "sample count must be >= 1");
  std::vector<double> cumulative(mesh.triangle_count());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    total += mesh.area(t);
    cumulative[t] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const auto t = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cumulative.begin(), static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
    const double s = std::sqrt(unit(rng));
    const double r = unit(rng);
    const Vec3 p = (1.0 - s) * mesh.corner(t, 0) + s * (1.0 - r) * mesh.corner(t, 1) + s * r * mesh.corner(t, 2);
    cloud.points.push_back(p);
    cloud.normals.push_back(mesh.face_normal(t));
  }
  return cloud;
}

void PerturbationSpec::validate() const {
  if (!std::isfinite(noise_std) || noise_std < 0.0)
    throw Error(ErrorCode::InvalidParameter, "noise_std must be finite and >= 0");
  if (!std::isfinite(hole_radius) || hole_radius < 0.0)
    throw Error(ErrorCode::InvalidParameter, "hole_radius must be finite and >= 0");
  if (!(sampling_factor >= 0.0 && sampling_factor <= 1.0))
    throw Error(ErrorCode::InvalidParameter, "sampling_factor must lie in [0, 1]");
}

MetricPair make_metric_pair(ShapeKind kind, const PerturbationSpec& spec, std::size_t samples, int segments,
                            const ShapeParams& params) {
  spec.validate();
  MetricPair pair;
  pair.mesh = make_shape_mesh(kind, segments, params);
  pair.reference = sample_surface(pair.mesh, samples, derive_seed(spec.seed, 0));
  pair.gt_distance = kMetricOffset;

  PointCloud test = pair.reference;
  for (auto& p : test.points) p.z() += kMetricOffset;

  if (spec.hole_radius > 0.0) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& p : test.points) c += p.head<2>();
    c /= static_cast<double>(test.size());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < test.size(); ++i)
      if ((test.points[i].head<2>() - c).norm() >= spec.hole_radius) keep.push_back(i);
    test = test.select(keep);
    if (test.size() < 2) throw Error(ErrorCode::DegenerateOutput, "hole removal left fewer than 2 points");
  }

  if (spec.noise_std > 0.0) {
    std::mt19937_64 rng(derive_seed(spec.seed, 1));
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (auto& p : test.points) {
      p.x() += noise(rng);
      p.y() += noise(rng);
      p.z() += noise(rng);
    }
    test.normals.clear();
  }

  if (spec.sampling_factor > 0.0) {
    const auto keep_count = static_cast<std::size_t>(
        std::lround((1.0 - spec.sampling_factor) * static_cast<double>(test.size())));
    if (keep_count < 2) throw Error(ErrorCode::DegenerateOutput, "subsampling left fewer than 2 points");
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(spec.seed, 2));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(keep_count);
    std::sort(idx.begin(), idx.end());
    test = test.select(idx);
  }

  pair.test = std::move(test);
  return pair;
}

TriangleMesh make_icosphere(int subdivisions) {
  if (subdivisions < 0) throw Error(ErrorCode::InvalidParameter, "subdivisions must be >= 0");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                   {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : mesh.vertices) v.normalize();
  mesh.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                    {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                    {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoints;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
      midpoints.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(mesh.triangles.size() * 4);
    for (const auto& tri : mesh.triangles) {
      const auto ab = midpoint(tri[0], tri[1]);
      const auto bc = midpoint(tri[1], tri[2]);
      const auto ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.triangles = std::move(next);
  }
  for (auto& tri : mesh.triangles) {
    if (mesh.face_normal(&tri - mesh.triangles.data()).dot(mesh.face_centroid(&tri - mesh.triangles.data())) < 0.0)
      std::swap(tri[1], tri[2]);
  }
  return mesh;
}

namespace {

TriangleMesh ellipsoid(int subdivisions, const Vec3& radii, const Vec3& center, const Mat3& rotation) {
  TriangleMesh m = make_icosphere(subdivisions);
  for (auto& v : m.vertices) v = rotation * radii.cwiseProduct(v) + center;
  return m;
}

}  // namespace

TriangleMesh make_bunny_proxy(int subdivisions) {
  const Mat3 id = Mat3::Identity();
  const double deg = std::numbers::pi / 180.0;
  auto rot = [](double ax, double ay, double az) {
    return (Eigen::AngleAxisd(az, Vec3::UnitZ()) * Eigen::AngleAxisd(ax, Vec3::UnitX()) *
            Eigen::AngleAxisd(ay, Vec3::UnitY()))
        .toRotationMatrix();
  };

  TriangleMesh mesh = ellipsoid(subdivisions, {0.060, 0.045, 0.040}, {0.0, 0.0, 0.0}, id);
  // haunches, front paws
  mesh.append(ellipsoid(subdivisions, {0.030, 0.018, 0.028}, {-0.030, -0.036, -0.008}, id));
  mesh.append(ellipsoid(subdivisions, {0.030, 0.018, 0.028}, {-0.030, 0.036, -0.008}, id));
  mesh.append(ellipsoid(subdivisions, {0.018, 0.010, 0.012}, {0.045, -0.022, -0.034}, id));
  mesh.append(ellipsoid(subdivisions, {0.018, 0.010, 0.012}, {0.048, 0.020, -0.034}, rot(0, 0, 10 * deg)));
  // head turned to one side, with a nose
  mesh.append(ellipsoid(subdivisions, {0.032, 0.027, 0.028}, {0.055, 0.008, 0.036}, rot(0, 0, 20 * deg)));
  mesh.append(ellipsoid(subdivisions, {0.008, 0.008, 0.008}, {0.085, 0.020, 0.034}, id));
  // two thin ears at different angles
  mesh.append(ellipsoid(subdivisions, {0.011, 0.004, 0.032}, {0.050, -0.014, 0.086}, rot(15 * deg, -0.3, 0)));
  mesh.append(ellipsoid(subdivisions, {0.011, 0.004, 0.030}, {0.040, 0.022, 0.082}, rot(-30 * deg, -0.5, 0)));
  mesh.append(ellipsoid(subdivisions, {0.013, 0.013, 0.013}, {-0.064, 0.0, 0.012}, id));

  const Vec3 c = mesh.centroid();
  for (auto& v : mesh.vertices) v -= c;
  return mesh;
}

}  // namespace mvfuse
