#pragma once

#include "mvfuse/pose_graph.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace mvfuse {

enum class MultiviewMethod { GlobalIcp, PoseGraph, RefinedPoseGraph };

inline constexpr MultiviewMethod kAllMultiviewMethods[] = {MultiviewMethod::GlobalIcp, MultiviewMethod::PoseGraph,
                                                          MultiviewMethod::RefinedPoseGraph};

/// global-icp, pose-graph, refined-pose-graph
const char* to_string(MultiviewMethod method);
MultiviewMethod parse_multiview_method(std::string_view name);

struct MultiviewResult {
  std::vector<RigidTransform> poses;  // world poses, in the frame of init_poses[0]
  std::optional<PoseGraph> graph;
  std::optional<PoseGraphSolution> solution;
};

/// PoseGraph pairs with point-to-plane ICP, RefinedPoseGraph with generalized
/// ICP; `params.method` is overridden accordingly. GlobalIcp runs the joint
/// solver once per entry of params.levels.
MultiviewResult register_multiview(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& init_poses,
                                   MultiviewMethod method, const PoseGraphParams& params);

}  // namespace mvfuse
