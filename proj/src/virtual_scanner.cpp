#include "mvfuse/virtual_scanner.hpp"

#include "mvfuse/error.hpp"
#include "mvfuse/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace mvfuse {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  while (true) {
    const Vec3 v{g(rng), g(rng), g(rng)};
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

}  // namespace

void CameraModel::validate() const {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidParameter, "camera resolution must be positive");
  if (!(fov_x_deg > 0.0 && fov_x_deg < 180.0 && fov_y_deg > 0.0 && fov_y_deg < 180.0))
    throw Error(ErrorCode::InvalidParameter, "field of view must lie in (0, 180) degrees");
  if (!(dof_near > 0.0 && dof_near < dof_far))
    throw Error(ErrorCode::InvalidParameter, "need 0 < dof_near < dof_far");
}

double CameraModel::fx() const { return 0.5 * width / std::tan(0.5 * fov_x_deg * kDeg); }
double CameraModel::fy() const { return 0.5 * height / std::tan(0.5 * fov_y_deg * kDeg); }

Vec3 CameraModel::pixel_direction(int u, int v) const {
  return {(u + 0.5 - 0.5 * width) / fx(), (v + 0.5 - 0.5 * height) / fy(), 1.0};
}

Eigen::Vector2d CameraModel::project(const Vec3& p) const {
  return {fx() * p.x() / p.z() + 0.5 * width, fy() * p.y() / p.z() + 0.5 * height};
}

RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 up = Vec3::UnitZ() - Vec3::UnitZ().dot(forward) * forward;
  if (up.norm() < 1e-9) up = Vec3::UnitX() - Vec3::UnitX().dot(forward) * forward;
  up.normalize();
  const Vec3 down = -up;
  const Vec3 right = down.cross(forward);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return {r, eye};
}

std::vector<bool> visible_triangles(const Bvh& bvh, const RigidTransform& pose, const CameraModel& camera) {
  const TriangleMesh& mesh = bvh.mesh();
  const RigidTransform world_to_cam = pose.inverse();
  const Vec3 eye = pose.translation();
  std::vector<bool> seen(mesh.triangle_count(), false);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3 c = mesh.face_centroid(t);
    if (mesh.face_normal(t).dot(eye - c) <= 0.0) continue;
    const Vec3 pc = world_to_cam.apply(c);
    if (pc.z() < camera.dof_near || pc.z() > camera.dof_far) continue;
    const Eigen::Vector2d px = camera.project(pc);
    if (px.x() < 0.0 || px.y() < 0.0 || px.x() > camera.width || px.y() > camera.height) continue;
    const auto hit = bvh.intersect({eye, c - eye});
    if (!hit) continue;
    if (hit->triangle == t || hit->t >= 1.0 - 1e-9) seen[t] = true;
  }
  return seen;
}

std::vector<RigidTransform> rank_viewpoints(const Bvh& bvh, double radius, double min_separation,
                                            std::uint64_t seed, const CameraModel& camera,
                                            std::size_t* covering_prefix) {
  camera.validate();
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidParameter, "viewpoint radius must be positive");
  if (!(min_separation > 0.0)) throw Error(ErrorCode::InvalidParameter, "min_separation must be positive");
  const Vec3 center = bvh.mesh().centroid();

  // dart throwing on the sphere
  std::mt19937_64 rng(seed);
  std::vector<Vec3> dirs;
  const double min_angle = min_separation / radius;
  int failures = 0;
  while (failures < 2000) {
    const Vec3 d = random_unit(rng);
    bool ok = min_angle <= std::numbers::pi;
    for (const auto& e : dirs) {
      if (std::acos(std::clamp(d.dot(e), -1.0, 1.0)) < min_angle) {
        ok = false;
        break;
      }
    }
    if (ok) {
      dirs.push_back(d);
      failures = 0;
    } else {
      ++failures;
    }
  }
  if (dirs.size() < 2)
    throw Error(ErrorCode::PlacementFailure, "min_separation too large to place two viewpoints");

  std::vector<RigidTransform> candidates;
  std::vector<std::vector<bool>> visibility;
  for (const auto& d : dirs) {
    candidates.push_back(look_at(center + radius * d, center));
    visibility.push_back(visible_triangles(bvh, candidates.back(), camera));
  }

  // greedy set cover, then farthest-point order for candidates adding nothing
  const std::size_t ntri = bvh.mesh().triangle_count();
  std::vector<bool> covered(ntri, false);
  std::vector<bool> used(candidates.size(), false);
  std::vector<std::size_t> ranking;
  std::size_t prefix = 0;
  bool covering = true;
  while (ranking.size() < candidates.size()) {
    std::size_t best = candidates.size();
    std::size_t best_gain = 0;
    if (covering) {
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (used[c]) continue;
        std::size_t gain = 0;
        for (std::size_t t = 0; t < ntri; ++t) gain += visibility[c][t] && !covered[t];
        if (gain > best_gain) {
          best_gain = gain;
          best = c;
        }
      }
      if (best == candidates.size()) {
        covering = false;
        prefix = ranking.size();
      }
    }
    if (!covering) {
      double best_sep = -1.0;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (used[c]) continue;
        double sep = std::numeric_limits<double>::infinity();
        for (std::size_t r : ranking) sep = std::min(sep, std::acos(std::clamp(dirs[c].dot(dirs[r]), -1.0, 1.0)));
        if (sep > best_sep) {
          best_sep = sep;
          best = c;
        }
      }
    }
    used[best] = true;
    ranking.push_back(best);
    if (covering)
      for (std::size_t t = 0; t < ntri; ++t) covered[t] = covered[t] || visibility[best][t];
  }
  if (covering) prefix = ranking.size();
  if (covering_prefix) *covering_prefix = prefix;

  std::vector<RigidTransform> out;
  for (std::size_t r : ranking) out.push_back(candidates[r]);
  return out;
}

std::vector<RigidTransform> poisson_viewpoints(const TriangleMesh& mesh, double radius, double min_separation,
                                               std::uint64_t seed, const CameraModel& camera) {
  const Bvh bvh(mesh);
  std::size_t prefix = 0;
  auto ranked = rank_viewpoints(bvh, radius, min_separation, seed, camera, &prefix);
  ranked.resize(prefix);
  return ranked;
}

PointCloud render_scan(const Bvh& bvh, const RigidTransform& pose, const CameraModel& camera, int stride) {
  camera.validate();
  if (stride < 1) throw Error(ErrorCode::InvalidParameter, "stride must be >= 1");
  PointCloud scan;
  const Mat3& r = pose.rotation();
  const Vec3 eye = pose.translation();
  for (int v = 0; v < camera.height; v += stride) {
    for (int u = 0; u < camera.width; u += stride) {
      const Vec3 d = camera.pixel_direction(u, v);
      const auto hit = bvh.intersect({eye, r * d});
      if (!hit) continue;
      if (hit->t < camera.dof_near || hit->t > camera.dof_far) continue;
      const Vec3 p = hit->t * d;
      Vec3 n = r.transpose() * bvh.mesh().face_normal(hit->triangle);
      if (n.dot(p) > 0.0) n = -n;
      scan.points.push_back(p);
      scan.normals.push_back(n);
    }
  }
  if (scan.empty()) throw Error(ErrorCode::EmptyScan, "no ray hit the mesh inside the depth band");
  return scan;
}

ScanSet simulate_scans(const TriangleMesh& mesh, std::size_t views, int stride, std::uint64_t seed,
                       const CameraModel& camera, double min_separation) {
  if (views < 1) throw Error(ErrorCode::InvalidParameter, "need at least one view");
  const Bvh bvh(mesh);
  auto ranked = rank_viewpoints(bvh, camera.default_view_radius(), min_separation, seed, camera);
  if (ranked.size() < views)
    throw Error(ErrorCode::PlacementFailure, "only " + std::to_string(ranked.size()) + " viewpoints could be placed");
  ranked.resize(views);

  // Order the views so consecutive scans share as much surface as possible:
  // maximize the weakest link's co-visible area, then the total.
  const std::size_t n = views;
  std::vector<std::vector<bool>> seen;
  for (const auto& pose : ranked) seen.push_back(visible_triangles(bvh, pose, camera));
  std::vector<double> shared(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      double area = 0.0;
      for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
        if (seen[a][t] && seen[b][t]) area += mesh.area(t);
      shared[a * n + b] = shared[b * n + a] = area;
    }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (n <= 9) {
    std::vector<std::size_t> perm = order;
    double best_min = -1.0, best_sum = -1.0;
    do {
      double lo = std::numeric_limits<double>::infinity(), sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const double w = shared[perm[k] * n + perm[k + 1]];
        lo = std::min(lo, w);
        sum += w;
      }
      if (lo > best_min || (lo == best_min && sum > best_sum)) {
        best_min = lo;
        best_sum = sum;
        order = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    // greedy: extend from the best-covering view by the largest shared area
    std::vector<bool> used(n, false);
    used[0] = true;
    for (std::size_t step = 1; step < n; ++step) {
      std::size_t best = n;
      for (std::size_t c = 0; c < n; ++c)
        if (!used[c] && (best == n || shared[order[step - 1] * n + c] > shared[order[step - 1] * n + best])) best = c;
      used[best] = true;
      order[step] = best;
    }
  }
  std::vector<RigidTransform> chain;
  for (std::size_t k : order) chain.push_back(ranked[k]);

  ScanSet set;
  set.seed = seed;
  for (const auto& pose : chain) {
    ScanView view;
    view.scan = render_scan(bvh, pose, camera, stride);
    view.gt_pose = pose;
    view.perturbed_pose = pose;
    set.views.push_back(std::move(view));
  }
  return set;
}

ScanSet perturb_poses(ScanSet scans, const PerturbationBounds& b, std::uint64_t seed) {
  if (b.translation_lo_mm < 0.0 || b.translation_hi_mm < b.translation_lo_mm || b.rotation_lo_deg < 0.0 ||
      b.rotation_hi_deg < b.rotation_lo_deg)
    throw Error(ErrorCode::InvalidParameter, "perturbation bounds must satisfy 0 <= lo <= hi");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& view : scans.views) {
    const Vec3 dir = random_unit(rng);
    const double mag_mm = b.translation_lo_mm + (b.translation_hi_mm - b.translation_lo_mm) * unit(rng);
    const Vec3 axis = random_unit(rng);
    const double angle_deg = b.rotation_lo_deg + (b.rotation_hi_deg - b.rotation_lo_deg) * unit(rng);
    view.drawn_translation_m = mag_mm * 1e-3;
    view.drawn_angle_rad = angle_deg * kDeg;
    view.perturbation = RigidTransform(so3_exp(view.drawn_angle_rad * axis), view.drawn_translation_m * dir);
    view.perturbed_pose = view.perturbation * view.gt_pose;
  }
  scans.bounds = b;
  return scans;
}

}  // namespace mvfuse
