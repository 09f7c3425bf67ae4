#pragma once

#include "mvfuse/icp.hpp"
#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/types.hpp"

#include <vector>

namespace mvfuse {

/// Joint point-to-plane alignment of all clouds at once. Every iteration
/// matches each cloud j against every cloud i < j in world coordinates and
/// solves one least-squares problem over poses 1..n-1 (pose 0 fixed).
/// A positive voxel_size downsamples the clouds first; zero keeps them.
/// Fails with DisconnectedSet when the overlap graph is not connected.
std::vector<RigidTransform> global_icp(const std::vector<PointCloud>& clouds,
                                       const std::vector<RigidTransform>& init_poses, const IcpParams& params,
                                       double voxel_size);

}  // namespace mvfuse
