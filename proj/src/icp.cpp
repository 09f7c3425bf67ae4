#include "mvfuse/icp.hpp"

#include "mvfuse/cloud_ops.hpp"
#include "mvfuse/error.hpp"
#include "mvfuse/kdtree.hpp"

#include <cmath>
#include <string>

namespace mvfuse {

const char* to_string(IcpMethod method) {
  return method == IcpMethod::PointToPlane ? "point-to-plane" : "generalized";
}

void IcpParams::validate() const {
  if (!(max_correspondence_distance > 0.0) || !std::isfinite(max_correspondence_distance))
    throw Error(ErrorCode::InvalidParameter, "max_correspondence_distance must be positive");
  if (max_iterations < 1) throw Error(ErrorCode::InvalidParameter, "max_iterations must be >= 1");
  if (!(convergence_rel_change >= 0.0)) throw Error(ErrorCode::InvalidParameter, "convergence_rel_change must be >= 0");
  if (!(gicp_epsilon > 0.0 && gicp_epsilon < 1.0))
    throw Error(ErrorCode::InvalidParameter, "gicp_epsilon must lie in (0, 1)");
}

Mat3 surface_covariance(const Vec3& normal, double epsilon) {
  const Mat3 nn = normal * normal.transpose();
  return epsilon * nn + (Mat3::Identity() - nn);
}

double point_to_plane_objective(const PointCloud& source, const PointCloud& target,
                                std::span<const Correspondence> matches, const RigidTransform& transform) {
  double sum = 0.0;
  for (const auto& c : matches) {
    const double r = target.normals[c.target].dot(transform.apply(source.points[c.source]) - target.points[c.target]);
    sum += r * r;
  }
  return sum;
}

double gicp_objective(const PointCloud& source, const PointCloud& target, std::span<const Correspondence> matches,
                      const RigidTransform& transform, double epsilon) {
  double sum = 0.0;
  const Mat3& r = transform.rotation();
  for (const auto& c : matches) {
    const Vec3 d = target.points[c.target] - transform.apply(source.points[c.source]);
    const Mat3 cov = surface_covariance(target.normals[c.target], epsilon) +
                     surface_covariance(r * source.normals[c.source], epsilon);
    sum += d.dot(cov.inverse() * d);
  }
  return sum;
}

namespace {

struct NormalEquations {
  Mat6 h = Mat6::Zero();
  Vec6 g = Vec6::Zero();
};

// Damped Gauss-Newton on a frozen correspondence set. Steps are left
// increments T <- exp(xi) T and are only taken when the objective does not go up.
template <typename Cost, typename Linearize>
RigidTransform solve_frozen(RigidTransform transform, const Cost& cost, const Linearize& linearize) {
  double f = cost(transform);
  double lambda = 1e-4;
  for (int inner = 0; inner < 30 && f > 0.0; ++inner) {
    const NormalEquations ne = linearize(transform);
    const double floor = 1e-12 * std::max(ne.h.trace(), 1e-300) / 6.0;
    bool accepted = false;
    Vec6 step = Vec6::Zero();
    while (lambda < 1e12) {
      Mat6 a = ne.h;
      for (int k = 0; k < 6; ++k) a(k, k) += lambda * ne.h(k, k) + floor;
      step = a.ldlt().solve(-ne.g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const RigidTransform candidate = se3_exp(step) * transform;
      const double fc = cost(candidate);
      if (fc <= f) {
        transform = candidate;
        accepted = fc < f;
        f = fc;
        lambda = std::max(lambda / 10.0, 1e-12);
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted || step.norm() < 1e-13) break;
  }
  return transform;
}

double point_rmse(const PointCloud& source, const PointCloud& target, const std::vector<Correspondence>& matches,
                  const RigidTransform& transform) {
  if (matches.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : matches) sum += (transform.apply(source.points[c.source]) - target.points[c.target]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(matches.size()));
}

template <typename Match, typename Cost, typename Linearize>
RegistrationResult run_icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                           const IcpParams& params, const IcpObserver& observer, const Match& match,
                           const Cost& cost, const Linearize& linearize) {
  RegistrationResult result;
  RigidTransform transform = init;
  std::vector<Correspondence> previous;
  double previous_rmse = 0.0;
  int used = 0;
  for (int it = 0; it < params.max_iterations; ++it) {
    std::vector<Correspondence> matches = match(transform);
    if (matches.empty())
      throw Error(ErrorCode::NoOverlap, "no correspondences within " +
                                            std::to_string(params.max_correspondence_distance) + " m at iteration " +
                                            std::to_string(it));
    if (observer) observer(IcpIterate{it, transform, matches});
    const double rmse = point_rmse(source, target, matches, transform);
    if (it > 0 && (matches == previous || std::abs(previous_rmse - rmse) <= params.convergence_rel_change * previous_rmse))
      break;
    transform = solve_frozen(
        transform, [&](const RigidTransform& t) { return cost(matches, t); },
        [&](const RigidTransform& t) { return linearize(matches, t); });
    previous = std::move(matches);
    previous_rmse = rmse;
    used = it + 1;
  }
  const auto final_matches = match(transform);
  result.transform = transform;
  result.fitness = static_cast<double>(final_matches.size()) / static_cast<double>(source.size());
  result.inlier_rmse = point_rmse(source, target, final_matches, transform);
  result.iterations_used = used;
  return result;
}

void check_inputs(const PointCloud& source, const PointCloud& target, const IcpParams& params) {
  params.validate();
  if (source.empty() || target.empty()) throw Error(ErrorCode::EmptyInput, "ICP needs two non-empty clouds");
}

PointCloud with_normals(const PointCloud& cloud) {
  if (cloud.has_normals()) return cloud;
  return estimate_normals(cloud, 30, Vec3::Zero());
}

}  // namespace

RegistrationResult icp_point_to_plane(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                                      const IcpParams& params, const IcpObserver& observer) {
  check_inputs(source, target, params);
  if (!target.has_normals()) throw Error(ErrorCode::MissingNormals, "point-to-plane ICP needs target normals");
  const KdTree tree(target.points);
  const double max_d2 = params.max_correspondence_distance * params.max_correspondence_distance;

  auto match = [&](const RigidTransform& t) {
    std::vector<Correspondence> out;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const Neighbor nn = tree.nearest(t.apply(source.points[i]));
      if (nn.distance_sq <= max_d2) out.push_back({i, nn.index});
    }
    return out;
  };
  auto cost = [&](const std::vector<Correspondence>& m, const RigidTransform& t) {
    return point_to_plane_objective(source, target, m, t);
  };
  auto linearize = [&](const std::vector<Correspondence>& m, const RigidTransform& t) {
    NormalEquations ne;
    for (const auto& c : m) {
      const Vec3 p = t.apply(source.points[c.source]);
      const Vec3& n = target.normals[c.target];
      Vec6 j;
      j << p.cross(n), n;
      const double r = n.dot(p - target.points[c.target]);
      ne.h.noalias() += j * j.transpose();
      ne.g.noalias() += j * r;
    }
    return ne;
  };
  return run_icp(source, target, init, params, observer, match, cost, linearize);
}

RegistrationResult icp_generalized(const PointCloud& source_in, const PointCloud& target_in,
                                   const RigidTransform& init, const IcpParams& params, const IcpObserver& observer) {
  check_inputs(source_in, target_in, params);
  const PointCloud source = with_normals(source_in);
  const PointCloud target = with_normals(target_in);
  const KdTree tree(target.points);
  const double eps = params.gicp_epsilon;
  std::vector<Mat3> target_cov(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) target_cov[i] = surface_covariance(target.normals[i], eps);

  auto match = [&](const RigidTransform& t) {
    std::vector<Correspondence> out;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const Vec3 n = t.rotate(source.normals[i]);
      const auto nn = tree.nearest_if(t.apply(source.points[i]), params.max_correspondence_distance,
                                      [&](std::size_t k) { return n.dot(target.normals[k]) > 0.0; });
      if (nn) out.push_back({i, nn->index});
    }
    return out;
  };
  auto cost = [&](const std::vector<Correspondence>& m, const RigidTransform& t) {
    return gicp_objective(source, target, m, t, eps);
  };
  auto linearize = [&](const std::vector<Correspondence>& m, const RigidTransform& t) {
    NormalEquations ne;
    Eigen::Matrix<double, 3, 6> j;
    for (const auto& c : m) {
      const Vec3 p = t.apply(source.points[c.source]);
      const Vec3 d = target.points[c.target] - p;
      const Mat3 info = (target_cov[c.target] + surface_covariance(t.rotate(source.normals[c.source]), eps)).inverse();
      j.leftCols<3>() = skew(p);
      j.rightCols<3>() = -Mat3::Identity();
      ne.h.noalias() += j.transpose() * info * j;
      ne.g.noalias() += j.transpose() * info * d;
    }
    return ne;
  };
  return run_icp(source, target, init, params, observer, match, cost, linearize);
}

RegistrationResult register_pair(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                                 const IcpParams& params, const IcpObserver& observer) {
  if (params.method == IcpMethod::Generalized) return icp_generalized(source, target, init, params, observer);
  return icp_point_to_plane(source, target, init, params, observer);
}

}  // namespace mvfuse
