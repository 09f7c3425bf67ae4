#pragma once

#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/types.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mvfuse {

enum class IcpMethod { PointToPlane, Generalized };

const char* to_string(IcpMethod method);

struct IcpParams {
  double max_correspondence_distance = 0.004;  // meters
  int max_iterations = 50;
  double convergence_rel_change = 1e-6;
  IcpMethod method = IcpMethod::PointToPlane;
  double gicp_epsilon = 1e-6;

  void validate() const;
};

struct RegistrationResult {
  RigidTransform transform;  // maps source into the target frame
  double fitness = 0.0;      // inlier fraction of the source
  double inlier_rmse = 0.0;
  int iterations_used = 0;
};

struct Correspondence {
  std::size_t source = 0;
  std::size_t target = 0;
  bool operator==(const Correspondence&) const = default;
};

/// State handed to an observer once per outer iteration, after matching and
/// before the pose update.
struct IcpIterate {
  int iteration = 0;
  const RigidTransform& transform;
  const std::vector<Correspondence>& correspondences;
};

using IcpObserver = std::function<void(const IcpIterate&)>;

/// Point-to-plane ICP. Residual n_q . (T p - q) against the target normals,
/// nearest-neighbor matches within the distance cutoff, damped Gauss-Newton
/// on the frozen set of each iteration. The transform never increases the
/// objective of the set it was solved on.
RegistrationResult icp_point_to_plane(const PointCloud& source, const PointCloud& target,
                                      const RigidTransform& init, const IcpParams& params,
                                      const IcpObserver& observer = {});

/// Generalized (plane-to-plane) ICP with covariances eps*n*n^T + (I - n*n^T).
/// Matches must agree in normal orientation (n_a . n_b > 0 after the
/// transform). Normals are estimated when absent.
RegistrationResult icp_generalized(const PointCloud& source, const PointCloud& target,
                                   const RigidTransform& init, const IcpParams& params,
                                   const IcpObserver& observer = {});

/// Dispatches on params.method.
RegistrationResult register_pair(const PointCloud& source, const PointCloud& target,
                                 const RigidTransform& init, const IcpParams& params,
                                 const IcpObserver& observer = {});

/// sum (n_q . (T p - q))^2
double point_to_plane_objective(const PointCloud& source, const PointCloud& target,
                                std::span<const Correspondence> matches, const RigidTransform& transform);

/// sum d^T (C_b + R C_a R^T)^-1 d with d = b - T a. Both clouds need normals.
double gicp_objective(const PointCloud& source, const PointCloud& target, std::span<const Correspondence> matches,
                      const RigidTransform& transform, double epsilon);

/// Surface covariance for a unit normal.
Mat3 surface_covariance(const Vec3& normal, double epsilon);

}  // namespace mvfuse
