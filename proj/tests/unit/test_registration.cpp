#include "mvfuse/cloud_ops.hpp"
#include "mvfuse/error.hpp"
#include "mvfuse/evaluation.hpp"
#include "mvfuse/global_icp.hpp"
#include "mvfuse/icp.hpp"
#include "mvfuse/multiview.hpp"
#include "mvfuse/pose_graph.hpp"
#include "mvfuse/shape_synth.hpp"
#include "mvfuse/virtual_scanner.hpp"
#include "support/fixtures.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace mvfuse;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigError;
}

IcpParams params_for(IcpMethod m, double max_distance = 0.01) {
  IcpParams p;
  p.method = m;
  p.max_correspondence_distance = max_distance;
  p.max_iterations = 100;
  return p;
}

double pose_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

RigidTransform random_pose(std::mt19937_64& rng, double t_scale, double max_angle) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, max_angle);
  return RigidTransform(so3_exp(Vec3(g(rng), g(rng), g(rng)).normalized() * u(rng)),
                        t_scale * Vec3(g(rng), g(rng), g(rng)));
}

}  // namespace

TEST_CASE("pairwise ICP: identical clouds stay at identity") {
  const auto cloud = fixtures::wavy_patch(0, 0.05, 0, 0.05);
  for (IcpMethod m : {IcpMethod::PointToPlane, IcpMethod::Generalized}) {
    const auto r = register_pair(cloud, cloud, RigidTransform::identity(), params_for(m));
    CHECK(pose_distance(r.transform, RigidTransform::identity()) < 1e-9);
    CHECK(r.inlier_rmse < 1e-12);
    CHECK(r.fitness == 1.0);
  }
}

TEST_CASE("pairwise ICP: a 2 mm / 2 degree offset is undone") {
  const auto target = fixtures::wavy_patch(0, 0.06, 0, 0.06);
  const RigidTransform motion = RigidTransform(so3_exp(Vec3(1, -2, 0.5).normalized() * 2.0 * kDeg), {0.0012, -0.001, 0.0013});
  REQUIRE(motion.translation().norm() == doctest::Approx(0.002).epsilon(0.02));
  const auto source = apply_transform(target, motion);
  for (IcpMethod m : {IcpMethod::PointToPlane, IcpMethod::Generalized}) {
    const auto r = register_pair(source, target, RigidTransform::identity(), params_for(m));
    const RigidTransform err = r.transform * motion;
    CHECK(err.translation().norm() < 1e-3);
    CHECK(err.angle() < 0.1 * kDeg);
  }
}

TEST_CASE("pairwise ICP: errors") {
  const auto a = fixtures::wavy_patch(0, 0.02, 0, 0.02);
  const auto far = apply_transform(a, RigidTransform::translation({1.0, 0, 0}));
  for (IcpMethod m : {IcpMethod::PointToPlane, IcpMethod::Generalized})
    CHECK(code_of([&] { register_pair(far, a, {}, params_for(m)); }) == ErrorCode::NoOverlap);
  PointCloud bare = a;
  bare.normals.clear();
  CHECK(code_of([&] { icp_point_to_plane(a, bare, {}, params_for(IcpMethod::PointToPlane)); }) ==
        ErrorCode::MissingNormals);
  CHECK(code_of([&] { icp_point_to_plane(PointCloud{}, a, {}, params_for(IcpMethod::PointToPlane)); }) ==
        ErrorCode::EmptyInput);
  IcpParams bad = params_for(IcpMethod::Generalized);
  bad.gicp_epsilon = 1.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidParameter);
  bad = params_for(IcpMethod::Generalized, 0.0);
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidParameter);
  // generalized ICP estimates missing normals itself
  const auto r = icp_generalized(bare, bare, {}, params_for(IcpMethod::Generalized));
  CHECK(pose_distance(r.transform, RigidTransform::identity()) < 1e-9);
}

TEST_CASE("pairwise ICP: the inner solve never raises its own objective") {
  const auto target = fixtures::wavy_patch(0, 0.06, 0, 0.06);
  const auto source =
      apply_transform(fixtures::wavy_patch(0.01, 0.07, 0.005, 0.06), RigidTransform(so3_exp(Vec3(0.02, 0.03, -0.05)), {0.002, 0.001, -0.001}));
  for (IcpMethod m : {IcpMethod::PointToPlane, IcpMethod::Generalized}) {
    IcpParams p = params_for(m);
    p.gicp_epsilon = 1e-3;
    std::vector<RigidTransform> poses;
    std::vector<std::vector<Correspondence>> sets;
    const auto r = register_pair(source, target, {}, p, [&](const IcpIterate& it) {
      poses.push_back(it.transform);
      sets.push_back(it.correspondences);
    });
    poses.push_back(r.transform);
    REQUIRE(sets.size() >= 2);
    for (std::size_t k = 0; k + 1 < poses.size() && k < sets.size(); ++k) {
      if (m == IcpMethod::PointToPlane) {
        CHECK(point_to_plane_objective(source, target, sets[k], poses[k + 1]) <=
              point_to_plane_objective(source, target, sets[k], poses[k]));
      } else {
        CHECK(gicp_objective(source, target, sets[k], poses[k + 1], p.gicp_epsilon) <=
              gicp_objective(source, target, sets[k], poses[k], p.gicp_epsilon));
      }
    }
  }
}

TEST_CASE("pairwise ICP: a converged result is a fixed point") {
  const auto target = fixtures::wavy_patch(0, 0.06, 0, 0.06, 0.0015);
  const auto source = apply_transform(fixtures::wavy_patch(0.0103, 0.07, 0.0047, 0.06, 0.0013),
                                      RigidTransform(so3_exp(Vec3(0.01, -0.02, 0.03)), {0.001, 0.002, 0.0}));
  for (IcpMethod m : {IcpMethod::PointToPlane, IcpMethod::Generalized}) {
    IcpParams p = params_for(m, 0.005);
    p.convergence_rel_change = 0.0;
    p.max_iterations = 200;
    const auto first = register_pair(source, target, {}, p);
    const auto again = register_pair(source, target, first.transform, p);
    CHECK(pose_distance(first.transform, again.transform) < 1e-9);
  }
}

TEST_CASE("generalized ICP: objective tends to half the squared distance as epsilon -> 1") {
  const auto target = fixtures::wavy_patch(0, 0.03, 0, 0.03);
  const auto source = fixtures::wavy_patch(0.0005, 0.03, 0.0003, 0.03);
  std::vector<Correspondence> matches;
  for (std::size_t i = 0; i < std::min(source.size(), target.size()); i += 7) matches.push_back({i, (i * 13) % target.size()});
  const RigidTransform t(so3_exp(Vec3(0.1, 0.2, -0.1)), {0.01, 0.0, 0.02});
  double half_sq = 0.0;
  for (const auto& c : matches) half_sq += 0.5 * (target.points[c.target] - t.apply(source.points[c.source])).squaredNorm();
  const double eps = 1.0 - 1e-9;
  CHECK(std::abs(gicp_objective(source, target, matches, t, eps) - half_sq) <= 1e-6 * half_sq);
  CHECK(surface_covariance(Vec3::UnitZ(), 0.25).isApprox(Vec3(1.0, 1.0, 0.25).asDiagonal().toDenseMatrix()));
}

TEST_CASE("thin wall: only point-to-plane pairs opposite sides") {
  const auto target = fixtures::thin_wall();
  const auto source = fixtures::thin_wall(0.003, 0.06, 0.001, 0.37);
  const RigidTransform init = RigidTransform::translation({0.002, 0.0, 0.0});
  auto cross_fraction = [&](const IcpIterate& it) {
    std::size_t cross = 0;
    for (const auto& c : it.correspondences)
      cross += it.transform.rotate(source.normals[c.source]).dot(target.normals[c.target]) < 0.0;
    return static_cast<double>(cross) / static_cast<double>(it.correspondences.size());
  };
  double worst_p2l = 0.0, worst_gicp = 0.0;
  icp_point_to_plane(source, target, init, params_for(IcpMethod::PointToPlane, 0.003),
                     [&](const IcpIterate& it) { worst_p2l = std::max(worst_p2l, cross_fraction(it)); });
  const auto g = icp_generalized(source, target, init, params_for(IcpMethod::Generalized, 0.003),
                                 [&](const IcpIterate& it) { worst_gicp = std::max(worst_gicp, cross_fraction(it)); });
  CHECK(worst_p2l >= 0.1);
  CHECK(worst_gicp == 0.0);
  // the faces of the generalized result sit on the matching target faces
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3 p = g.transform.apply(source.points[i]);
    CHECK(std::abs(p.x() - (source.normals[i].x() > 0 ? 0.0015 : -0.0015)) < 1e-6);
  }
}

TEST_CASE("global ICP: ground truth is a fixed point; offsets are recovered") {
  const std::vector<PointCloud> strips = {fixtures::wavy_patch(0, 0.06, 0, 0.05), fixtures::wavy_patch(0.04, 0.10, 0, 0.05),
                                          fixtures::wavy_patch(0.08, 0.14, 0, 0.05)};
  const std::vector<RigidTransform> gt(3);
  // below the lattice spacing only the exactly coincident points pair up
  const auto same = global_icp(strips, gt, params_for(IcpMethod::PointToPlane, 0.0009), 0.0);
  for (const auto& pose : same) CHECK(pose_distance(pose, RigidTransform::identity()) < 1e-9);

  // shifting every strip by k mm: the clouds live in shifted frames
  std::vector<PointCloud> moved;
  std::vector<RigidTransform> truth;
  const Vec3 dir = Vec3(1, 1, 1).normalized();
  for (int k = 0; k < 3; ++k) {
    const RigidTransform shift = RigidTransform::translation(0.001 * k * dir);
    moved.push_back(apply_transform(strips[k], shift));
    truth.push_back(shift.inverse());
  }
  const auto est = global_icp(moved, gt, params_for(IcpMethod::PointToPlane, 0.004), 0.0);
  for (int k = 0; k < 3; ++k) CHECK((est[k].translation() - truth[k].translation()).norm() < 1e-3);

  const auto a = fixtures::wavy_patch(0, 0.05, 0, 0.05);
  const auto b = apply_transform(a, RigidTransform::translation({0.005, 0, 0}));
  const auto two = global_icp({a, b}, {RigidTransform{}, RigidTransform{}}, params_for(IcpMethod::PointToPlane, 0.01), 0.0);
  CHECK((two[1].translation() - Vec3(-0.005, 0, 0)).norm() < 1e-4);
}

TEST_CASE("global ICP: errors") {
  const auto a = fixtures::wavy_patch(0, 0.03, 0, 0.03);
  const auto far = apply_transform(a, RigidTransform::translation({2.0, 0, 0}));
  const auto p = params_for(IcpMethod::PointToPlane, 0.004);
  CHECK(code_of([&] { global_icp({a, a, far}, std::vector<RigidTransform>(3), p, 0.0); }) == ErrorCode::DisconnectedSet);
  CHECK(code_of([&] { global_icp({a}, std::vector<RigidTransform>(1), p, 0.0); }) == ErrorCode::InsufficientData);
  CHECK(code_of([&] { global_icp({a, a}, std::vector<RigidTransform>(1), p, 0.0); }) == ErrorCode::SizeMismatch);
}

TEST_CASE("pose graph build: edge combinatorics and composition consistency") {
  const auto scans = simulate_scans(make_bunny_proxy(), 3, 4, 1);
  std::vector<PointCloud> clouds;
  std::vector<RigidTransform> gt;
  for (const auto& v : scans.views) {
    clouds.push_back(v.scan);
    gt.push_back(v.gt_pose);
  }
  PoseGraphParams params;
  params.voxel_size = 0.002;
  params.method = IcpMethod::Generalized;
  const auto graph = build_pose_graph(clouds, gt, params);
  std::size_t odometry = 0;
  const PoseGraphEdge* loop = nullptr;
  const PoseGraphEdge* e01 = nullptr;
  const PoseGraphEdge* e12 = nullptr;
  for (const auto& e : graph.edges) {
    if (e.kind == EdgeKind::Odometry) ++odometry;
    if (e.i == 0 && e.j == 2) loop = &e;
    if (e.i == 0 && e.j == 1) e01 = &e;
    if (e.i == 1 && e.j == 2) e12 = &e;
    CHECK(e.information.isApprox(e.information.transpose()));
    CHECK(e.information.ldlt().info() == Eigen::Success);
  }
  CHECK(odometry == 2);
  REQUIRE(e01 != nullptr);
  REQUIRE(e12 != nullptr);
  // the loop edge exists exactly when its fitness clears the floor
  PoseGraphParams strict = params;
  strict.fitness_floor = 1.0;
  const auto pruned = build_pose_graph(clouds, gt, strict);
  CHECK(pruned.edges.size() == 2);
  if (loop != nullptr) {
    CHECK(loop->fitness >= params.fitness_floor);
    CHECK(pose_distance(e01->transform * e12->transform, loop->transform) < 1e-6);
  }
  CHECK(code_of([&] { build_pose_graph({clouds[0]}, {gt[0]}, params); }) == ErrorCode::InsufficientData);
  // odometry pair with no overlap
  const std::vector<PointCloud> apart = {clouds[0], apply_transform(clouds[1], RigidTransform::translation({3, 0, 0}))};
  CHECK(code_of([&] { build_pose_graph(apart, {gt[0], gt[1]}, params); }) == ErrorCode::GraphConstructionFailure);
}

namespace {

// Consistent synthetic graph: edges measured exactly from `truth`.
PoseGraph synthetic_graph(const std::vector<RigidTransform>& truth, std::uint64_t seed) {
  PoseGraph g;
  const auto pts = testing::random_points(200, seed, -0.05, 0.05);
  for (std::size_t k = 0; k < truth.size(); ++k) g.nodes.push_back({k, truth[0].inverse() * truth[k]});
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = i + 1; j < truth.size(); ++j) {
      if (j != i + 1 && (i + j) % 3 != 0) continue;
      PoseGraphEdge e;
      e.i = i;
      e.j = j;
      e.transform = truth[i].inverse() * truth[j];
      e.information = point_information(pts);
      e.correspondences = pts.size();
      e.kind = j == i + 1 ? EdgeKind::Odometry : EdgeKind::LoopClosure;
      g.edges.push_back(e);
    }
  return g;
}

}  // namespace

TEST_CASE("pose graph optimization: consistent graph, corrupted loop closure, single node") {
  std::mt19937_64 rng(5);
  std::vector<RigidTransform> truth{RigidTransform::identity()};
  for (int k = 1; k < 8; ++k) truth.push_back(truth.back() * random_pose(rng, 0.05, 0.5));
  const PoseGraph clean = synthetic_graph(truth, 9);
  const auto sol = optimize_pose_graph(clean, 0.001);
  CHECK(sol.converged);
  CHECK(sol.pruned.empty());
  for (std::size_t k = 0; k < truth.size(); ++k) CHECK(pose_distance(sol.poses[k], clean.nodes[k].pose) < 1e-9);

  // perturb the starting poses: the optimum is still the chain
  PoseGraph shaken = clean;
  for (std::size_t k = 1; k < shaken.nodes.size(); ++k) shaken.nodes[k].pose = shaken.nodes[k].pose * random_pose(rng, 0.002, 0.02);
  const auto back = optimize_pose_graph(shaken, 0.001);
  for (std::size_t k = 0; k < truth.size(); ++k) CHECK(pose_distance(back.poses[k], clean.nodes[k].pose) < 1e-9);

  PoseGraph corrupted = clean;
  PoseGraphEdge bad = corrupted.edges.front();
  bad.kind = EdgeKind::LoopClosure;
  bad.i = 0;
  bad.j = 5;
  bad.transform = RigidTransform::translation({1.0, 0, 0}) * truth[0].inverse() * truth[5];
  corrupted.edges.push_back(bad);
  const auto robust = optimize_pose_graph(corrupted, 0.001);
  REQUIRE(robust.pruned.size() == 1);
  CHECK(robust.pruned.front() == corrupted.edges.size() - 1);
  CHECK(robust.weights.back() < 1e-6);
  for (std::size_t k = 0; k < truth.size(); ++k) CHECK(pose_distance(robust.poses[k], sol.poses[k]) < 1e-6);

  PoseGraph single;
  single.nodes.push_back({0, RigidTransform::identity()});
  const auto one = optimize_pose_graph(single, 0.001);
  REQUIRE(one.poses.size() == 1);
  CHECK(one.poses[0].matrix() == Eigen::Matrix4d::Identity());

  PoseGraph broken = clean;
  broken.edges.erase(broken.edges.begin());
  CHECK(code_of([&] { optimize_pose_graph(broken, 0.001); }) == ErrorCode::DisconnectedSet);
}

TEST_CASE("multiview: shared-lattice strips at ground truth come back unchanged") {
  const std::vector<PointCloud> strips = {fixtures::wavy_patch(0, 0.06, 0, 0.05), fixtures::wavy_patch(0.03, 0.09, 0, 0.05),
                                          fixtures::wavy_patch(0.06, 0.12, 0, 0.05)};
  const RigidTransform world(so3_exp(Vec3(0.3, -0.2, 0.1)), {0.1, 0.2, 0.3});
  std::vector<PointCloud> clouds;
  std::vector<RigidTransform> gt;
  for (const auto& s : strips) {
    clouds.push_back(apply_transform(s, world.inverse()));
    gt.push_back(world);
  }
  PoseGraphParams params;
  // correspondence cutoff 0.8 mm, below the 1 mm lattice spacing
  params.voxel_size = 0.0004;
  for (MultiviewMethod m : kAllMultiviewMethods) {
    const auto res = register_multiview(clouds, gt, m, params);
    CHECK(transform_error(gt, res.poses).mean_abs < 1e-6);
  }
}

TEST_CASE("multiview: common left transform leaves the errors unchanged") {
  auto scans = perturb_poses(simulate_scans(make_bunny_proxy(), 4, 8, 2), {1, 2, 1, 2}, 3);
  std::vector<PointCloud> clouds;
  std::vector<RigidTransform> gt, init, gt2, init2;
  const RigidTransform g(so3_exp(Vec3(0.4, 0.1, -0.3)), {0.2, -0.1, 0.05});
  for (const auto& v : scans.views) {
    clouds.push_back(v.scan);
    gt.push_back(v.gt_pose);
    init.push_back(v.perturbed_pose);
    gt2.push_back(g * v.gt_pose);
    init2.push_back(g * v.perturbed_pose);
  }
  PoseGraphParams params;
  params.voxel_size = 0.003;
  params.downsample = DownsampleMode::Always;
  for (MultiviewMethod m : kAllMultiviewMethods) {
    const double a = transform_error(gt, register_multiview(clouds, init, m, params).poses).mean_abs;
    const double b = transform_error(gt2, register_multiview(clouds, init2, m, params).poses).mean_abs;
    CHECK(std::abs(a - b) < 1e-6);
  }
}

TEST_CASE("transform_error arithmetic and gauge") {
  std::vector<RigidTransform> gt{RigidTransform::identity(), RigidTransform::rotation(Vec3::UnitZ(), 0.3)};
  CHECK(transform_error(gt, gt).mean_abs == 0.0);
  auto est = gt;
  est[1] = RigidTransform(gt[1].rotation(), gt[1].translation() + Vec3(0.016, 0, 0));
  const auto e = transform_error({gt[1]}, {est[1]});
  CHECK(e.mean_abs == 0.0);  // a single pose is gauge-fixed to the identity
  const auto e2 = transform_error(gt, est);
  CHECK(e2.per_scan[1] == doctest::Approx(0.001));
  CHECK(e2.mean_abs == doctest::Approx(0.0005));
  CHECK(e2.translation_m == doctest::Approx(0.008));
  const RigidTransform g(so3_exp(Vec3(0.2, 0.5, -0.1)), {1, 2, 3});
  std::vector<RigidTransform> gt_g, est_g;
  for (std::size_t k = 0; k < 2; ++k) {
    gt_g.push_back(g * gt[k]);
    est_g.push_back(g * est[k]);
  }
  CHECK(transform_error(gt_g, est_g).mean_abs == doctest::Approx(e2.mean_abs).epsilon(1e-9));
  CHECK(code_of([&] { transform_error(gt, {gt[0]}); }) == ErrorCode::SizeMismatch);
}
