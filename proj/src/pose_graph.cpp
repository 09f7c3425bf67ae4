#include "mvfuse/pose_graph.hpp"

#include "mvfuse/cloud_ops.hpp"
#include "mvfuse/error.hpp"
#include "mvfuse/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvfuse {

IcpParams PoseGraphParams::icp_params(double level) const {
  IcpParams p;
  p.max_correspondence_distance = max_correspondence_distance() * level;
  p.max_iterations = max_iterations;
  p.convergence_rel_change = convergence_rel_change;
  p.method = method;
  p.gicp_epsilon = gicp_epsilon;
  return p;
}

void PoseGraphParams::validate() const {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size))
    throw Error(ErrorCode::InvalidParameter, "voxel_size must be positive");
  if (!(distance_multiplier >= 1.0 && distance_multiplier <= 4.0))
    throw Error(ErrorCode::InvalidParameter, "distance multiplier must lie in [1, 4]");
  if (!(prune_divisor >= 2.0 && prune_divisor <= 4.0))
    throw Error(ErrorCode::InvalidParameter, "prune divisor must lie in [2, 4]");
  if (!(fitness_floor >= 0.0 && fitness_floor <= 1.0))
    throw Error(ErrorCode::InvalidParameter, "fitness floor must lie in [0, 1]");
  if (levels.empty()) throw Error(ErrorCode::InvalidParameter, "at least one registration level is required");
  for (double l : levels)
    if (!(l >= 1.0)) throw Error(ErrorCode::InvalidParameter, "registration levels must be >= 1");
  icp_params().validate();
}

PointCloud prepare_cloud(const PointCloud& cloud, double voxel_size, DownsampleMode mode, std::size_t min_points) {
  const bool down = mode == DownsampleMode::Always || (mode == DownsampleMode::Auto && cloud.size() >= min_points);
  return down ? voxel_downsample(cloud, voxel_size) : cloud;
}

void PoseGraph::validate() const {
  if (nodes.empty()) throw Error(ErrorCode::EmptyInput, "pose graph has no nodes");
  const RigidTransform& first = nodes.front().pose;
  if (!first.rotation().isIdentity(1e-12) || !first.translation().isZero(1e-12))
    throw Error(ErrorCode::InvalidParameter, "node 0 pose must be the identity");
  std::vector<bool> chained(nodes.size(), false);
  for (const auto& e : edges) {
    if (e.i >= nodes.size() || e.j >= nodes.size() || e.i >= e.j)
      throw Error(ErrorCode::InvalidParameter, "pose graph edge with bad node ids");
    if ((e.kind == EdgeKind::Odometry) != (e.j == e.i + 1))
      throw Error(ErrorCode::InvalidParameter, "odometry edges must join consecutive nodes, loop closures must not");
    if (!(e.weight >= 0.0 && e.weight <= 1.0)) throw Error(ErrorCode::InvalidParameter, "edge weight outside [0, 1]");
    if (!e.information.isApprox(e.information.transpose(), 1e-9))
      throw Error(ErrorCode::InvalidParameter, "information matrix not symmetric");
    if (e.kind == EdgeKind::Odometry) chained[e.i] = true;
  }
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k)
    if (!chained[k]) throw Error(ErrorCode::DisconnectedSet, "odometry chain broken after node " + std::to_string(k));
}

Mat6 point_information(const std::vector<Vec3>& points) {
  Mat6 info = Mat6::Zero();
  Eigen::Matrix<double, 3, 6> g;
  for (const auto& p : points) {
    g.leftCols<3>() = -skew(p);
    g.rightCols<3>() = Mat3::Identity();
    info.noalias() += g.transpose() * g;
  }
  return info;
}

namespace {

std::vector<Vec3> inlier_points(const PointCloud& source, const PointCloud& target, const RigidTransform& t,
                                double max_distance) {
  const KdTree tree(target.points);
  std::vector<Vec3> out;
  for (const auto& p : source.points) {
    if (tree.nearest(t.apply(p)).distance_sq <= max_distance * max_distance) out.push_back(p);
  }
  return out;
}

}  // namespace

PoseGraph build_pose_graph(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& init_poses,
                           const PoseGraphParams& params, const PairObserver& observer) {
  if (clouds.size() < 2) throw Error(ErrorCode::InsufficientData, "a pose graph needs at least 2 clouds");
  if (init_poses.size() != clouds.size())
    throw Error(ErrorCode::SizeMismatch, "got " + std::to_string(init_poses.size()) + " poses for " +
                                             std::to_string(clouds.size()) + " clouds");
  params.validate();

  // per level, per cloud
  std::vector<std::vector<PointCloud>> pyramid(params.levels.size());
  for (std::size_t c = 0; c < clouds.size(); ++c) {
    if (clouds[c].empty()) throw Error(ErrorCode::EmptyInput, "cloud " + std::to_string(c) + " is empty");
    const PointCloud withn = clouds[c].has_normals() ? clouds[c] : estimate_normals(clouds[c], 30, Vec3::Zero());
    for (std::size_t l = 0; l < params.levels.size(); ++l) {
      const double level = params.levels[l];
      pyramid[l].push_back(level > 1.0 ? voxel_downsample(withn, params.voxel_size * level)
                                       : prepare_cloud(withn, params.voxel_size, params.downsample,
                                                       params.downsample_min_points));
    }
  }

  PoseGraph graph;
  for (std::size_t c = 0; c < clouds.size(); ++c) graph.nodes.push_back({c, RigidTransform::identity()});

  for (std::size_t i = 0; i < clouds.size(); ++i) {
    for (std::size_t j = i + 1; j < clouds.size(); ++j) {
      const bool odometry = j == i + 1;
      RigidTransform t = init_poses[i].inverse() * init_poses[j];
      RegistrationResult res;
      try {
        for (std::size_t l = 0; l < params.levels.size(); ++l) {
          const PointCloud& source = pyramid[l][j];
          const PointCloud& target = pyramid[l][i];
          IcpObserver hook;
          if (observer) hook = [&](const IcpIterate& it) { observer(i, j, source, target, it); };
          res = register_pair(source, target, t, params.icp_params(params.levels[l]), hook);
          t = res.transform;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoOverlap) throw;
        if (odometry)
          throw Error(ErrorCode::GraphConstructionFailure,
                      "odometry pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what());
        continue;
      }
      if (!odometry && res.fitness < params.fitness_floor) continue;
      PoseGraphEdge edge;
      edge.i = i;
      edge.j = j;
      edge.transform = t;
      edge.kind = odometry ? EdgeKind::Odometry : EdgeKind::LoopClosure;
      edge.fitness = res.fitness;
      const auto pts = inlier_points(pyramid.back()[j], pyramid.back()[i], t, params.max_correspondence_distance());
      edge.information = point_information(pts);
      edge.correspondences = pts.size();
      graph.edges.push_back(edge);
    }
  }

  for (const auto& e : graph.edges)
    if (e.kind == EdgeKind::Odometry) graph.nodes[e.j].pose = graph.nodes[e.i].pose * e.transform;
  return graph;
}

Vec6 edge_error(const PoseGraphEdge& edge, const RigidTransform& pose_i, const RigidTransform& pose_j) {
  return se3_log(edge.transform.inverse() * pose_i.inverse() * pose_j);
}

double edge_residual(const PoseGraphEdge& edge, const RigidTransform& pose_i, const RigidTransform& pose_j) {
  const Vec6 e = edge_error(edge, pose_i, pose_j);
  const double n = static_cast<double>(std::max<std::size_t>(edge.correspondences, 1));
  return std::sqrt(std::max(0.0, e.dot(edge.information * e)) / n);
}

namespace {

struct Solver {
  const std::vector<PoseGraphEdge>& edges;
  std::vector<std::size_t> active;
  std::vector<double> weights;  // per edge in `edges`
  double mu = 0.0;

  double cost(const std::vector<RigidTransform>& poses) const {
    double sum = 0.0;
    for (std::size_t k : active) {
      const auto& e = edges[k];
      const Vec6 r = edge_error(e, poses[e.i], poses[e.j]);
      sum += weights[k] * r.dot(e.information * r);
    }
    return sum;
  }

  // returns true when the weights moved
  bool update_weights(const std::vector<RigidTransform>& poses) {
    double change = 0.0;
    for (std::size_t k : active) {
      const auto& e = edges[k];
      if (e.kind == EdgeKind::Odometry) continue;
      const double r = edge_residual(e, poses[e.i], poses[e.j]);
      const double w = mu > 0.0 ? std::pow(mu / (mu + r * r), 2) : 1.0;
      change = std::max(change, std::abs(w - weights[k]));
      weights[k] = w;
    }
    return change > 1e-12;
  }

  // Levenberg-Marquardt with fixed weights. Returns false on hitting the cap.
  bool levenberg_marquardt(std::vector<RigidTransform>& poses, int max_iterations, int& iterations) const {
    const std::size_t n = poses.size() - 1;
    const Eigen::Index dim = static_cast<Eigen::Index>(6 * n);
    double f = cost(poses);
    double lambda = 1e-4;
    const double h = 1e-6;
    for (int it = 0; it < max_iterations; ++it) {
      if (f <= 0.0) return true;
      ++iterations;
      Eigen::MatrixXd big_h = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
      for (std::size_t k : active) {
        const auto& e = edges[k];
        const Vec6 r = edge_error(e, poses[e.i], poses[e.j]);
        Eigen::Matrix<double, 6, 12> jac = Eigen::Matrix<double, 6, 12>::Zero();
        for (int side = 0; side < 2; ++side) {
          const std::size_t node = side == 0 ? e.i : e.j;
          if (node == 0) continue;
          for (int a = 0; a < 6; ++a) {
            Vec6 d = Vec6::Zero();
            d[a] = h;
            RigidTransform pi = poses[e.i], pj = poses[e.j];
            RigidTransform& moved = side == 0 ? pi : pj;
            const RigidTransform base = moved;
            moved = base * se3_exp(d);
            const Vec6 plus = edge_error(e, pi, pj);
            moved = base * se3_exp(-d);
            const Vec6 minus = edge_error(e, pi, pj);
            jac.col(6 * side + a) = (plus - minus) / (2.0 * h);
          }
        }
        const Eigen::Matrix<double, 12, 6> jtw = jac.transpose() * (weights[k] * e.information);
        const Eigen::Matrix<double, 12, 12> hh = jtw * jac;
        const Eigen::Matrix<double, 12, 1> bb = jtw * r;
        const std::size_t nodes[2] = {e.i, e.j};
        for (int s = 0; s < 2; ++s) {
          if (nodes[s] == 0) continue;
          const Eigen::Index rs = static_cast<Eigen::Index>(6 * (nodes[s] - 1));
          b.segment<6>(rs) += bb.segment<6>(6 * s);
          for (int t = 0; t < 2; ++t) {
            if (nodes[t] == 0) continue;
            const Eigen::Index rt = static_cast<Eigen::Index>(6 * (nodes[t] - 1));
            big_h.block<6, 6>(rs, rt) += hh.block<6, 6>(6 * s, 6 * t);
          }
        }
      }
      const double floor = 1e-12 * std::max(big_h.trace() / static_cast<double>(dim), 1e-300);
      bool accepted = false;
      Eigen::VectorXd step;
      double fc = f;
      while (lambda < 1e12) {
        Eigen::MatrixXd a = big_h;
        for (Eigen::Index k = 0; k < dim; ++k) a(k, k) += lambda * big_h(k, k) + floor;
        step = a.ldlt().solve(-b);
        if (step.allFinite()) {
          std::vector<RigidTransform> candidate = poses;
          for (std::size_t k = 0; k < n; ++k)
            candidate[k + 1] = poses[k + 1] * se3_exp(step.segment<6>(static_cast<Eigen::Index>(6 * k)));
          fc = cost(candidate);
          if (fc < f) {
            poses = std::move(candidate);
            accepted = true;
            lambda = std::max(lambda / 10.0, 1e-12);
            break;
          }
        }
        lambda *= 10.0;
      }
      if (!accepted) return true;  // no descent left at machine precision
      const double decrease = f - fc;
      f = fc;
      if (decrease <= 1e-15 * f || step.norm() < 1e-12) return true;
    }
    return false;
  }

  bool solve(std::vector<RigidTransform>& poses, int max_iterations, int& iterations) {
    bool ok = true;
    update_weights(poses);
    for (int round = 0; round < 50; ++round) {
      ok = levenberg_marquardt(poses, max_iterations, iterations) && ok;
      if (!update_weights(poses)) return ok;
    }
    return false;
  }
};

}  // namespace

PoseGraphSolution optimize_pose_graph(const PoseGraph& graph, double edge_prune_threshold, int max_iterations) {
  graph.validate();
  if (!(edge_prune_threshold > 0.0)) throw Error(ErrorCode::InvalidParameter, "edge prune threshold must be positive");
  if (max_iterations < 1) throw Error(ErrorCode::InvalidParameter, "max_iterations must be >= 1");

  PoseGraphSolution out;
  out.poses.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) out.poses.push_back(n.pose);
  if (graph.nodes.size() == 1) return out;

  Solver solver{graph.edges, {}, {}, edge_prune_threshold * edge_prune_threshold};
  solver.weights.resize(graph.edges.size());
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    solver.active.push_back(k);
    solver.weights[k] = graph.edges[k].kind == EdgeKind::Odometry ? 1.0 : graph.edges[k].weight;
  }

  out.converged = solver.solve(out.poses, max_iterations, out.iterations);

  std::vector<std::size_t> keep;
  for (std::size_t k : solver.active) {
    const auto& e = graph.edges[k];
    if (e.kind == EdgeKind::LoopClosure && edge_residual(e, out.poses[e.i], out.poses[e.j]) > edge_prune_threshold)
      out.pruned.push_back(k);
    else
      keep.push_back(k);
  }
  if (!out.pruned.empty()) {
    solver.active = keep;
    out.converged = solver.solve(out.poses, max_iterations, out.iterations) && out.converged;
  }
  out.weights = solver.weights;
  return out;
}

}  // namespace mvfuse
