#include "mvfuse/multiview.hpp"

#include "mvfuse/error.hpp"
#include "mvfuse/global_icp.hpp"

#include <string>

namespace mvfuse {

const char* to_string(MultiviewMethod method) {
  switch (method) {
    case MultiviewMethod::GlobalIcp: return "global-icp";
    case MultiviewMethod::PoseGraph: return "pose-graph";
    case MultiviewMethod::RefinedPoseGraph: return "refined-pose-graph";
  }
  return "?";
}

MultiviewMethod parse_multiview_method(std::string_view name) {
  for (MultiviewMethod m : kAllMultiviewMethods)
    if (name == to_string(m)) return m;
  throw Error(ErrorCode::ConfigError, "unknown registration method '" + std::string(name) + "'");
}

MultiviewResult register_multiview(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& init_poses,
                                   MultiviewMethod method, const PoseGraphParams& params_in) {
  PoseGraphParams params = params_in;
  params.validate();
  if (init_poses.size() != clouds.size())
    throw Error(ErrorCode::SizeMismatch, "got " + std::to_string(init_poses.size()) + " poses for " +
                                             std::to_string(clouds.size()) + " clouds");
  MultiviewResult out;
  if (method == MultiviewMethod::GlobalIcp) {
    params.method = IcpMethod::PointToPlane;
    std::vector<RigidTransform> poses = init_poses;
    for (double level : params.levels) {
      bool down = level > 1.0 || params.downsample == DownsampleMode::Always;
      if (params.downsample == DownsampleMode::Auto && level == 1.0) {
        for (const auto& c : clouds) down = down || c.size() >= params.downsample_min_points;
      }
      poses = global_icp(clouds, poses, params.icp_params(level), down ? params.voxel_size * level : 0.0);
    }
    out.poses = std::move(poses);
    return out;
  }

  params.method = method == MultiviewMethod::RefinedPoseGraph ? IcpMethod::Generalized : IcpMethod::PointToPlane;
  out.graph = build_pose_graph(clouds, init_poses, params);
  out.solution = optimize_pose_graph(*out.graph, params.edge_prune_threshold());
  for (const auto& p : out.solution->poses) out.poses.push_back(init_poses.front() * p);
  return out;
}

}  // namespace mvfuse
