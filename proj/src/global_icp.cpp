#include "mvfuse/global_icp.hpp"

#include "mvfuse/cloud_ops.hpp"
#include "mvfuse/error.hpp"
#include "mvfuse/kdtree.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <string>

namespace mvfuse {

namespace {

struct Match {
  std::size_t i, j;      // target cloud i, source cloud j
  std::size_t q, p;      // point indices
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

}  // namespace

std::vector<RigidTransform> global_icp(const std::vector<PointCloud>& clouds_in,
                                       const std::vector<RigidTransform>& init_poses, const IcpParams& params,
                                       double voxel_size) {
  if (clouds_in.size() < 2) throw Error(ErrorCode::InsufficientData, "global ICP needs at least 2 clouds");
  if (init_poses.size() != clouds_in.size())
    throw Error(ErrorCode::SizeMismatch, "got " + std::to_string(init_poses.size()) + " poses for " +
                                             std::to_string(clouds_in.size()) + " clouds");
  params.validate();
  if (!(voxel_size >= 0.0)) throw Error(ErrorCode::InvalidParameter, "voxel_size must be >= 0");

  const std::size_t n = clouds_in.size();
  std::vector<PointCloud> clouds;
  for (std::size_t c = 0; c < n; ++c) {
    if (clouds_in[c].empty()) throw Error(ErrorCode::EmptyInput, "cloud " + std::to_string(c) + " is empty");
    PointCloud withn = clouds_in[c].has_normals() ? clouds_in[c] : estimate_normals(clouds_in[c], 30, Vec3::Zero());
    clouds.push_back(voxel_size > 0.0 ? voxel_downsample(withn, voxel_size) : std::move(withn));
  }

  std::vector<RigidTransform> poses = init_poses;
  const double max_d2 = params.max_correspondence_distance * params.max_correspondence_distance;
  const Eigen::Index dim = static_cast<Eigen::Index>(6 * (n - 1));

  auto match_all = [&](const std::vector<RigidTransform>& current) {
    std::vector<std::unique_ptr<KdTree>> trees;
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<Vec3> world;
      world.reserve(clouds[c].size());
      for (const auto& p : clouds[c].points) world.push_back(current[c].apply(p));
      trees.push_back(std::make_unique<KdTree>(std::move(world)));
    }
    std::vector<Match> out;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        for (std::size_t p = 0; p < clouds[j].size(); ++p) {
          const Neighbor nn = trees[i]->nearest(current[j].apply(clouds[j].points[p]));
          if (nn.distance_sq <= max_d2) out.push_back({i, j, nn.index, p});
        }
    return out;
  };

  auto cost = [&](const std::vector<Match>& matches, const std::vector<RigidTransform>& current) {
    double sum = 0.0;
    for (const auto& m : matches) {
      const Vec3 nq = current[m.i].rotate(clouds[m.i].normals[m.q]);
      const double r = nq.dot(current[m.j].apply(clouds[m.j].points[m.p]) - current[m.i].apply(clouds[m.i].points[m.q]));
      sum += r * r;
    }
    return sum;
  };

  auto rmse = [&](const std::vector<Match>& matches, const std::vector<RigidTransform>& current) {
    double sum = 0.0;
    for (const auto& m : matches)
      sum += (current[m.j].apply(clouds[m.j].points[m.p]) - current[m.i].apply(clouds[m.i].points[m.q])).squaredNorm();
    return matches.empty() ? 0.0 : std::sqrt(sum / static_cast<double>(matches.size()));
  };

  // damped Gauss-Newton on one frozen match set, left increments per pose
  auto solve = [&](const std::vector<Match>& matches) {
    double f = cost(matches, poses);
    double lambda = 1e-4;
    for (int inner = 0; inner < 30 && f > 0.0; ++inner) {
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
      for (const auto& m : matches) {
        const Vec3 nq = poses[m.i].rotate(clouds[m.i].normals[m.q]);
        const Vec3 p = poses[m.j].apply(clouds[m.j].points[m.p]);
        const double r = nq.dot(p - poses[m.i].apply(clouds[m.i].points[m.q]));
        Vec6 jj;
        jj << p.cross(nq), nq;
        // the target side sees the same Jacobian with opposite sign
        const std::size_t nodes[2] = {m.i, m.j};
        const double sign[2] = {-1.0, 1.0};
        for (int s = 0; s < 2; ++s) {
          if (nodes[s] == 0) continue;
          const Eigen::Index rs = static_cast<Eigen::Index>(6 * (nodes[s] - 1));
          g.segment<6>(rs) += sign[s] * r * jj;
          for (int t = 0; t < 2; ++t) {
            if (nodes[t] == 0) continue;
            const Eigen::Index rt = static_cast<Eigen::Index>(6 * (nodes[t] - 1));
            h.block<6, 6>(rs, rt) += sign[s] * sign[t] * jj * jj.transpose();
          }
        }
      }
      const double floor = 1e-12 * std::max(h.trace() / static_cast<double>(dim), 1e-300);
      bool accepted = false;
      Eigen::VectorXd step;
      while (lambda < 1e12) {
        Eigen::MatrixXd a = h;
        for (Eigen::Index k = 0; k < dim; ++k) a(k, k) += lambda * h(k, k) + floor;
        step = a.ldlt().solve(-g);
        if (step.allFinite()) {
          std::vector<RigidTransform> candidate = poses;
          for (std::size_t k = 1; k < n; ++k)
            candidate[k] = se3_exp(step.segment<6>(static_cast<Eigen::Index>(6 * (k - 1)))) * poses[k];
          const double fc = cost(matches, candidate);
          if (fc <= f) {
            accepted = fc < f;
            poses = std::move(candidate);
            f = fc;
            lambda = std::max(lambda / 10.0, 1e-12);
            break;
          }
        }
        lambda *= 10.0;
      }
      if (!accepted || step.norm() < 1e-13) break;
    }
  };

  std::vector<Match> previous;
  double previous_rmse = 0.0;
  for (int it = 0; it < params.max_iterations; ++it) {
    std::vector<Match> matches = match_all(poses);
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    for (const auto& m : matches) parent[find_root(parent, m.i)] = find_root(parent, m.j);
    for (std::size_t c = 1; c < n && it == 0; ++c)
      if (find_root(parent, c) != find_root(parent, 0))
        throw Error(ErrorCode::DisconnectedSet, "cloud " + std::to_string(c) + " has no overlap path to cloud 0");
    const double e = rmse(matches, poses);
    if (it > 0) {
      const bool same = matches.size() == previous.size() &&
                        std::equal(matches.begin(), matches.end(), previous.begin(), [](const Match& a, const Match& b) {
                          return a.i == b.i && a.j == b.j && a.q == b.q && a.p == b.p;
                        });
      if (same || std::abs(previous_rmse - e) <= params.convergence_rel_change * previous_rmse) break;
    }
    solve(matches);
    previous = std::move(matches);
    previous_rmse = e;
  }
  return poses;
}

}  // namespace mvfuse
