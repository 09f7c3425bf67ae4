#pragma once

#include "mvfuse/bvh.hpp"
#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/types.hpp"

#include <cstdint>
#include <vector>

namespace mvfuse {

/// Pinhole depth camera. Camera frame: x right, y down, z along the view axis.
struct CameraModel {
  int width = 1920;
  int height = 1200;
  double fov_x_deg = 38.70;
  double fov_y_deg = 24.75;
  double dof_near = 0.350;  // meters
  double dof_far = 0.700;

  void validate() const;
  double fx() const;
  double fy() const;
  /// Camera-frame direction through the center of pixel (u, v), with z = 1.
  Vec3 pixel_direction(int u, int v) const;
  /// Camera-frame point -> continuous pixel coordinates.
  Eigen::Vector2d project(const Vec3& p_cam) const;
  double default_view_radius() const { return 0.5 * (dof_near + dof_far); }
};

/// Camera-to-world pose looking from `eye` at `target`. Image "up" follows
/// world +z projected into the view plane, or +x when looking along +-z.
RigidTransform look_at(const Vec3& eye, const Vec3& target);

struct PerturbationBounds {
  double translation_lo_mm = 0.0;
  double translation_hi_mm = 0.0;
  double rotation_lo_deg = 0.0;
  double rotation_hi_deg = 0.0;
};

struct ScanView {
  PointCloud scan;               // camera frame
  RigidTransform gt_pose;        // camera -> world
  RigidTransform perturbed_pose;
  RigidTransform perturbation;   // perturbed_pose = perturbation * gt_pose
  double drawn_translation_m = 0.0;
  double drawn_angle_rad = 0.0;
};

struct ScanSet {
  std::vector<ScanView> views;
  std::string source_mesh;
  std::uint64_t seed = 0;
  PerturbationBounds bounds;
};

/// Per-triangle visibility from one camera: centroid inside the frustum and
/// DOF band, front-facing, and not occluded.
std::vector<bool> visible_triangles(const Bvh& bvh, const RigidTransform& camera_pose, const CameraModel& camera);

/// Dart-throwing Poisson-disc candidates on the sphere of `radius` around the
/// mesh centroid (pairwise geodesic distance >= min_separation), every one
/// looking at the centroid. All candidates come back ranked greedily by the
/// number of not-yet-covered triangles they add.
std::vector<RigidTransform> rank_viewpoints(const Bvh& bvh, double radius, double min_separation,
                                            std::uint64_t seed, const CameraModel& camera = {},
                                            std::size_t* covering_prefix = nullptr);

/// The greedy-ranked prefix that covers every coverable triangle.
std::vector<RigidTransform> poisson_viewpoints(const TriangleMesh& mesh, double radius, double min_separation,
                                               std::uint64_t seed, const CameraModel& camera = {});

/// Casts one ray per stride-th pixel; keeps the nearest hit when its depth is
/// inside the DOF band. Points are in the camera frame, in pixel scan order,
/// with normals of the hit triangle facing the camera.
PointCloud render_scan(const Bvh& bvh, const RigidTransform& camera_pose, const CameraModel& camera, int stride = 4);

/// Renders the `views` top-ranked viewpoints, ordered so that consecutive
/// scans share the most visible surface (weakest link first, then total).
ScanSet simulate_scans(const TriangleMesh& mesh, std::size_t views, int stride, std::uint64_t seed,
                       const CameraModel& camera = {}, double min_separation = 0.3);

/// perturbed_pose = P * gt_pose with P drawn per view: translation direction
/// and rotation axis uniform on the sphere, magnitudes uniform in the bounds.
ScanSet perturb_poses(ScanSet scans, const PerturbationBounds& bounds, std::uint64_t seed);

}  // namespace mvfuse
