#pragma once

#include "mvfuse/icp.hpp"
#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/types.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace mvfuse {

enum class DownsampleMode { Auto, Always, Never };

struct PoseGraphParams {
  double voxel_size = 0.002;  // meters
  double distance_multiplier = 2.0;
  double prune_divisor = 3.0;
  IcpMethod method = IcpMethod::PointToPlane;
  int max_iterations = 50;
  double convergence_rel_change = 1e-6;
  double gicp_epsilon = 1e-6;
  double fitness_floor = 0.3;
  /// Auto skips the downsampling for clouds below `downsample_min_points`.
  DownsampleMode downsample = DownsampleMode::Auto;
  std::size_t downsample_min_points = 100000;
  /// Voxel multipliers for the pairwise stage, coarsest first. Levels above 1
  /// are always downsampled.
  std::vector<double> levels = {1.0};

  double max_correspondence_distance() const { return voxel_size * distance_multiplier; }
  double edge_prune_threshold() const { return voxel_size / prune_divisor; }
  IcpParams icp_params(double level = 1.0) const;
  void validate() const;
};

/// Voxel-downsamples when the mode and point count ask for it.
PointCloud prepare_cloud(const PointCloud& cloud, double voxel_size, DownsampleMode mode, std::size_t min_points);

enum class EdgeKind { Odometry, LoopClosure };

struct PoseGraphNode {
  std::size_t cloud_id = 0;
  RigidTransform pose;
};

/// Edge (i, j): `transform` maps cloud j into the frame of cloud i.
struct PoseGraphEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  RigidTransform transform;
  Mat6 information = Mat6::Zero();
  EdgeKind kind = EdgeKind::Odometry;
  double weight = 1.0;
  double fitness = 0.0;
  std::size_t correspondences = 0;
};

struct PoseGraph {
  std::vector<PoseGraphNode> nodes;
  std::vector<PoseGraphEdge> edges;

  void validate() const;
};

/// Called for every pairwise ICP iteration while the graph is built.
using PairObserver = std::function<void(std::size_t i, std::size_t j, const PointCloud& source,
                                        const PointCloud& target, const IcpIterate& iterate)>;

/// Pairwise ICP over every pair i < j (source j, target i). Consecutive pairs
/// become odometry edges, the rest loop closures when their fitness reaches
/// the floor. Node poses start at the odometry chain composition.
PoseGraph build_pose_graph(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& init_poses,
                           const PoseGraphParams& params, const PairObserver& observer = {});

/// Gauss-Newton information sum G^T G, G = [-[p]x, I], over points of cloud j.
Mat6 point_information(const std::vector<Vec3>& points);

/// log(T_ij^-1 T_i^-1 T_j), a right-increment twist (omega, v).
Vec6 edge_error(const PoseGraphEdge& edge, const RigidTransform& pose_i, const RigidTransform& pose_j);

/// Root mean square point displacement implied by the edge error, in meters.
double edge_residual(const PoseGraphEdge& edge, const RigidTransform& pose_i, const RigidTransform& pose_j);

struct PoseGraphSolution {
  std::vector<RigidTransform> poses;
  std::vector<double> weights;        // per input edge; pruned edges keep their last weight
  std::vector<std::size_t> pruned;    // indices into graph.edges
  bool converged = true;
  int iterations = 0;
};

/// Levenberg-Marquardt over node poses 1..n-1 (node 0 fixed) with line-process
/// weights on loop closures, then one pruning pass and a re-run. Hitting the
/// iteration cap clears `converged` instead of throwing.
PoseGraphSolution optimize_pose_graph(const PoseGraph& graph, double edge_prune_threshold, int max_iterations = 100);

}  // namespace mvfuse
