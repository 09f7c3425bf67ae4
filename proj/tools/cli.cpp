#include "cli.hpp"

#include "mvfuse/cloud_ops.hpp"
#include "mvfuse/error.hpp"
#include "mvfuse/evaluation.hpp"
#include "mvfuse/io.hpp"
#include "mvfuse/metrics.hpp"
#include "mvfuse/multiview.hpp"
#include "mvfuse/random.hpp"
#include "mvfuse/shape_synth.hpp"
#include "mvfuse/virtual_scanner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace mvfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Options file: a JSON object whose keys are long option names; nested
// objects address subcommands ({"register": {"voxel-size": 0.003}}).
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return dump(app, default_also).dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json doc;
    try {
      doc = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError("config", e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config", "top level must be an object");
    std::vector<CLI::ConfigItem> items;
    walk(doc, {}, items);
    return items;
  }

 private:
  static json dump(const CLI::App* app, bool default_also) {
    json out = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& r = opt->results();
        out[name] = r.size() == 1 ? json(r.front()) : json(r);
      } else if (default_also && !opt->get_default_str().empty()) {
        out[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      json child = dump(sub, default_also);
      if (!child.empty()) out[sub->get_name()] = child;
    }
    return out;
  }

  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void walk(const json& node, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : node.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        walk(value, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, std::string(what) + ": '" + tok + "' is not a number");
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

bool is_mesh_path(const fs::path& p) {
  const auto e = lower_ext(p);
  return e == ".obj" || e == ".stl";
}

// Everything a command reads and writes, for the manifest.
struct Record {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

struct Globals {
  std::string unit = "m";
  std::string manifest;
  bool timing = false;

  double scale() const { return unit == "mm" ? 1e-3 : 1.0; }
};

PointCloud load_cloud(const std::string& path, const Globals& g, Record& rec) {
  PointCloud c = io::read_ply(path);
  io::scale_in_place(c, g.scale());
  rec.inputs.push_back(path);
  return c;
}

TriangleMesh load_mesh(const std::string& path, const Globals& g, Record& rec) {
  TriangleMesh m = io::read_mesh(path);
  io::scale_in_place(m, g.scale());
  rec.inputs.push_back(path);
  return m;
}

std::vector<RigidTransform> load_poses(const std::string& path, const Globals& g, Record& rec) {
  auto poses = io::read_poses(path);
  for (auto& p : poses) p = RigidTransform(p.rotation(), p.translation() * g.scale());
  rec.inputs.push_back(path);
  return poses;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

// ---- synth ----------------------------------------------------------------

struct SynthShapeOptions {
  std::string kind = "plane";
  double noise_std = 0.0;
  double hole_radius = 0.0;
  double sampling_factor = 0.0;
  std::size_t samples = 1000;
  int segments = 16;
  std::uint64_t seed = 1;
  std::string out_dir;
};

struct SynthBunnyOptions {
  int subdivisions = 3;
  std::string out;
};

void synth_shape(const SynthShapeOptions& o, Record& rec) {
  const auto kind = parse_shape_kind(o.kind);
  if (!kind) throw Error(ErrorCode::ConfigError, "kind: unknown shape '" + o.kind + "'");
  PerturbationSpec spec;
  spec.noise_std = o.noise_std;
  spec.hole_radius = o.hole_radius;
  spec.sampling_factor = o.sampling_factor;
  spec.seed = o.seed;
  const MetricPair pair = make_metric_pair(*kind, spec, o.samples, o.segments);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  io::write_ply(dir / "reference.ply", pair.reference);
  io::write_ply(dir / "test.ply", pair.test);
  io::write_obj(dir / "mesh.obj", pair.mesh);
  const ShapeParams shape;
  json meta = {{"shape", std::string(to_string(*kind))},
               {"gt_distance", pair.gt_distance},
               {"samples", o.samples},
               {"segments", o.segments},
               {"noise_std", o.noise_std},
               {"noise_model", "isotropic per-coordinate Gaussian"},
               {"hole_radius", o.hole_radius},
               {"sampling_factor", o.sampling_factor},
               {"sampling_applies_to", "test"},
               {"perturbation_order", {"hole", "noise", "subsample"}},
               {"seed", o.seed},
               {"shape_params",
                {{"slope_rise", shape.slope_rise},
                 {"sine_amplitude", shape.sine_amplitude},
                 {"sine_cycles", shape.sine_cycles},
                 {"triangle_amplitude", shape.triangle_amplitude},
                 {"triangle_cycles", shape.triangle_cycles}}},
               {"reference_points", pair.reference.size()},
               {"test_points", pair.test.size()}};
  io::write_json(dir / "meta.json", meta);
  for (const char* name : {"reference.ply", "test.ply", "mesh.obj", "meta.json"})
    rec.outputs.push_back((dir / name).string());
}

void synth_bunny(const SynthBunnyOptions& o, Record& rec) {
  io::write_mesh(o.out, make_bunny_proxy(o.subdivisions));
  rec.outputs.push_back(o.out);
}

// ---- scan -----------------------------------------------------------------

struct ScanOptions {
  std::string mesh;
  std::size_t views = 8;
  int stride = 4;
  std::vector<double> perturb = {0.0, 0.0};
  std::uint64_t seed = 1;
  double min_separation = 0.3;
  std::string out_dir;
};

void scan(const ScanOptions& o, const Globals& g, Record& rec) {
  if (o.perturb.size() != 2 || o.perturb[0] < 0.0 || o.perturb[1] < o.perturb[0])
    throw Error(ErrorCode::ConfigError, "perturb: expected lo,hi with 0 <= lo <= hi");
  const TriangleMesh mesh = o.mesh.empty() ? make_bunny_proxy() : load_mesh(o.mesh, g, rec);
  ScanSet scans = simulate_scans(mesh, o.views, o.stride, o.seed, {}, o.min_separation);
  const PerturbationBounds bounds{o.perturb[0], o.perturb[1], o.perturb[0], o.perturb[1]};
  scans = perturb_poses(std::move(scans), bounds, derive_seed(o.seed, 1));
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  std::vector<RigidTransform> gt, perturbed;
  for (std::size_t i = 0; i < scans.views.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scan_%03zu.ply", i);
    io::write_ply(dir / name, scans.views[i].scan);
    rec.outputs.push_back((dir / name).string());
    gt.push_back(scans.views[i].gt_pose);
    perturbed.push_back(scans.views[i].perturbed_pose);
  }
  const json meta = {{"seed", o.seed},
                     {"views", o.views},
                     {"stride", o.stride},
                     {"perturb_mm_deg", o.perturb},
                     {"mesh", o.mesh.empty() ? "bunny-proxy" : o.mesh},
                     {"frame", "camera to world; scans are in camera coordinates"}};
  io::write_poses(dir / "gt_poses.json", gt, meta);
  io::write_poses(dir / "perturbed_poses.json", perturbed, meta);
  rec.outputs.push_back((dir / "gt_poses.json").string());
  rec.outputs.push_back((dir / "perturbed_poses.json").string());
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessOptions {
  std::string in;
  std::string out;
  std::vector<double> crop;
  int outlier_k = 20;
  double outlier_std = std::numeric_limits<double>::infinity();
  double voxel = 0.0;
  int normals_k = 0;
  std::vector<double> viewpoint = {0.0, 0.0, 0.0};
};

void preprocess(const PreprocessOptions& o, const Globals& g, Record& rec) {
  PointCloud cloud = load_cloud(o.in, g, rec);
  if (!o.crop.empty()) {
    if (o.crop.size() != 6) throw Error(ErrorCode::ConfigError, "crop: expected xmin,ymin,zmin,xmax,ymax,zmax");
    Aabb box{Vec3(o.crop[0], o.crop[1], o.crop[2]) * g.scale(), Vec3(o.crop[3], o.crop[4], o.crop[5]) * g.scale()};
    if ((box.min.array() > box.max.array()).any()) throw Error(ErrorCode::ConfigError, "crop: min exceeds max");
    cloud = crop(cloud, box);
  }
  if (std::isfinite(o.outlier_std)) cloud = statistical_outlier_filter(cloud, o.outlier_k, o.outlier_std);
  if (o.voxel > 0.0) cloud = voxel_downsample(cloud, o.voxel * g.scale());
  if (o.normals_k > 0) {
    if (o.viewpoint.size() != 3) throw Error(ErrorCode::ConfigError, "viewpoint: expected x,y,z");
    cloud = estimate_normals(cloud, o.normals_k, Vec3(o.viewpoint[0], o.viewpoint[1], o.viewpoint[2]) * g.scale());
  }
  io::write_ply(o.out, cloud);
  rec.outputs.push_back(o.out);
}

// ---- register -------------------------------------------------------------

struct RegisterOptions {
  std::string method = "refined-pose-graph";
  double voxel_size = 0.002;
  double distance_mult = 2.0;
  double prune_div = 3.0;
  std::string downsample = "auto";
  std::vector<double> levels = {1.0};
  double gicp_epsilon = 1e-6;
  int max_iterations = 50;
  double fitness_floor = 0.3;
  int normals_k = 30;
  std::string init;
  std::vector<std::string> scans;
  std::string out;
  std::string out_poses;
};

PoseGraphParams pose_graph_params(double voxel, double mult, double div, const std::string& downsample,
                                  const std::vector<double>& levels, double eps, int max_iterations, double floor) {
  PoseGraphParams p;
  p.voxel_size = voxel;
  p.distance_multiplier = mult;
  p.prune_divisor = div;
  p.gicp_epsilon = eps;
  p.max_iterations = max_iterations;
  p.fitness_floor = floor;
  p.levels = levels;
  if (downsample == "auto") {
    p.downsample = DownsampleMode::Auto;
  } else if (downsample == "always") {
    p.downsample = DownsampleMode::Always;
  } else if (downsample == "never") {
    p.downsample = DownsampleMode::Never;
  } else {
    throw Error(ErrorCode::ConfigError, "downsample: expected auto, always or never");
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return p;
}

void register_scans(const RegisterOptions& o, const Globals& g, Record& rec, std::ostream& err) {
  const MultiviewMethod method = parse_multiview_method(o.method);
  const PoseGraphParams params = pose_graph_params(o.voxel_size * g.scale(), o.distance_mult, o.prune_div,
                                                   o.downsample, o.levels, o.gicp_epsilon, o.max_iterations,
                                                   o.fitness_floor);
  std::vector<PointCloud> clouds;
  for (const auto& path : o.scans) {
    PointCloud c = load_cloud(path, g, rec);
    if (!c.has_normals()) c = estimate_normals(c, o.normals_k, Vec3::Zero());
    clouds.push_back(std::move(c));
  }
  std::vector<RigidTransform> init;
  if (o.init.empty()) {
    init.assign(clouds.size(), RigidTransform::identity());
  } else {
    init = load_poses(o.init, g, rec);
  }
  if (init.size() != clouds.size())
    throw Error(ErrorCode::ConfigError, "init: " + std::to_string(init.size()) + " poses for " +
                                            std::to_string(clouds.size()) + " scans");
  const MultiviewResult result = register_multiview(clouds, init, method, params);
  PointCloud fused;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    PointCloud moved = apply_transform(clouds[i], result.poses[i]);
    moved.covariances.clear();
    fused.append(moved);
  }
  io::write_ply(o.out, fused);
  rec.outputs.push_back(o.out);
  json meta = {{"method", to_string(method)},
               {"voxel_size", params.voxel_size},
               {"max_correspondence_distance", params.max_correspondence_distance()},
               {"edge_prune_threshold", params.edge_prune_threshold()}};
  if (result.solution) {
    meta["pruned_edges"] = result.solution->pruned.size();
    meta["converged"] = result.solution->converged;
    if (!result.solution->converged) err << "warning: pose graph optimization hit its iteration cap\n";
  }
  if (result.graph) meta["edges"] = result.graph->edges.size();
  if (!o.out_poses.empty()) {
    io::write_poses(o.out_poses, result.poses, meta);
    rec.outputs.push_back(o.out_poses);
  }
}

// ---- measure --------------------------------------------------------------

struct MeasureOptions {
  std::string metric;
  std::string query;
  std::string reference;
  std::size_t k = 0;
  bool squared = false;
  std::size_t bins = 32;
  std::size_t emd_max_points = 2048;
  std::string out;
  std::string per_point;
};

json report_json(const DistanceReport& r) {
  json j = {{"metric", to_string(r.kind)},
            {"scalar", r.scalar},
            {"mean", r.mean},
            {"std", r.std},
            {"points", r.per_point.size()},
            {"flagged", r.flagged},
            {"fallbacks", r.fallbacks},
            {"squared", r.squared},
            {"histogram", {{"bin_edges", r.histogram.bin_edges}, {"counts", r.histogram.counts}}}};
  if (r.per_point.size() - r.flagged >= 2) {
    const GaussianFit gf = fit_gaussian(r);
    j["gaussian"] = {{"mean", gf.mean}, {"std", gf.std}};
  }
  return j;
}

void measure_cmd(const MeasureOptions& o, const Globals& g, Record& rec, std::ostream& out) {
  const auto kind = parse_metric_kind(o.metric);
  if (!kind) throw Error(ErrorCode::ConfigError, "metric: unknown metric '" + o.metric + "'");
  const PointCloud query = load_cloud(o.query, g, rec);
  MetricOptions mo;
  mo.k = o.k;
  mo.squared = o.squared;
  mo.bins = o.bins;
  mo.emd_max_points = o.emd_max_points;
  DistanceReport report;
  if (*kind == MetricKind::CloudToMesh) {
    if (!is_mesh_path(o.reference)) throw Error(ErrorCode::ConfigError, "reference: cloud-to-mesh needs an .obj/.stl mesh");
    const TriangleMesh mesh = load_mesh(o.reference, g, rec);
    report = measure(*kind, query, PointCloud{}, &mesh, mo);
  } else {
    if (is_mesh_path(o.reference))
      throw Error(ErrorCode::ConfigError, "reference: " + o.metric + " needs a .ply point cloud");
    const PointCloud reference = load_cloud(o.reference, g, rec);
    report = measure(*kind, query, reference, nullptr, mo);
  }
  const json doc = report_json(report);
  if (o.out.empty()) {
    out << doc.dump(2) << '\n';
  } else {
    io::write_json(o.out, doc);
    rec.outputs.push_back(o.out);
  }
  if (!o.per_point.empty()) {
    if (report.per_point.empty()) throw Error(ErrorCode::ConfigError, "per-point: " + o.metric + " has no per-point map");
    io::write_ply(o.per_point, query, {}, &report.per_point, "distance");
    rec.outputs.push_back(o.per_point);
  }
}

// ---- eval -----------------------------------------------------------------

struct EvalRegistrationOptions {
  std::string mesh;
  std::string ranges = "0:1,1:3,3:6,6:10,10:15";
  std::string methods = "all";
  std::size_t reps = 10;
  std::uint64_t seed = 1;
  std::size_t views = 8;
  int stride = 4;
  double voxel_size = 0.003;
  double distance_mult = 2.0;
  double prune_div = 3.0;
  std::string downsample = "always";
  std::vector<double> levels = {8.0, 1.0};
  double gicp_epsilon = 1e-6;
  std::string translation_unit = "m";
  std::string out;
  std::string summary;
};

struct EvalMetricsOptions {
  std::string shapes = "all";
  std::string metrics = "all";
  std::string sweeps = "noise,hole,sampling";
  std::string noise_values;
  std::string hole_values;
  std::string sampling_values;
  std::size_t reps = 10;
  std::uint64_t seed = 1;
  std::size_t samples = 1000;
  std::size_t k = 0;
  bool squared = false;
  std::string out;
};

struct EvalPosesOptions {
  std::string gt;
  std::string est;
  std::string translation_unit = "m";
  std::string out;
};

double translation_scale(const std::string& unit) {
  if (unit == "m") return 1.0;
  if (unit == "mm") return 1000.0;
  throw Error(ErrorCode::ConfigError, "translation-unit: expected m or mm");
}

void write_text(const std::string& path, const std::string& text, Record& rec, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  f << text;
  rec.outputs.push_back(path);
}

void eval_registration(const EvalRegistrationOptions& o, const Globals& g, Record& rec, std::ostream& out) {
  RegistrationBenchmarkSpec spec;
  spec.ranges.clear();
  for (const auto& tok : split(o.ranges)) {
    const auto v = parse_list(std::string(tok).replace(tok.find(':') == std::string::npos ? 0 : tok.find(':'),
                                                        tok.find(':') == std::string::npos ? 0 : 1, ","),
                              "ranges");
    if (v.size() != 2) throw Error(ErrorCode::ConfigError, "ranges: expected lo:hi, got '" + tok + "'");
    spec.ranges.push_back({v[0], v[1]});
  }
  if (o.methods != "all") {
    spec.methods.clear();
    for (const auto& m : split(o.methods)) spec.methods.push_back(parse_multiview_method(m));
  }
  spec.repetitions = o.reps;
  spec.seed = o.seed;
  spec.views = o.views;
  spec.stride = o.stride;
  spec.params = pose_graph_params(o.voxel_size * g.scale(), o.distance_mult, o.prune_div, o.downsample, o.levels,
                                  o.gicp_epsilon, 50, 0.3);
  spec.translation_scale = translation_scale(o.translation_unit);
  spec.timing = g.timing;
  const TriangleMesh mesh = o.mesh.empty() ? make_bunny_proxy() : load_mesh(o.mesh, g, rec);
  const auto rows = run_registration_benchmark(mesh, spec);
  std::ostringstream table;
  write_csv(table, rows);
  write_text(o.out, table.str(), rec, out);
  if (!o.summary.empty()) {
    std::ostringstream s;
    write_csv(s, summarize(rows));
    write_text(o.summary, s.str(), rec, out);
  }
}

void eval_metrics(const EvalMetricsOptions& o, Record& rec, std::ostream& out) {
  MetricBenchmarkSpec spec;
  if (o.shapes != "all") {
    spec.shapes.clear();
    for (const auto& s : split(o.shapes)) {
      const auto k = parse_shape_kind(s);
      if (!k) throw Error(ErrorCode::ConfigError, "shapes: unknown shape '" + s + "'");
      spec.shapes.push_back(*k);
    }
  }
  if (o.metrics != "all") {
    spec.metrics.clear();
    for (const auto& s : split(o.metrics)) {
      const auto k = parse_metric_kind(s);
      if (!k) throw Error(ErrorCode::ConfigError, "metrics: unknown metric '" + s + "'");
      spec.metrics.push_back(*k);
    }
  }
  spec.sweeps.clear();
  for (const auto& s : split(o.sweeps)) {
    const auto k = parse_sweep_kind(s);
    if (!k) throw Error(ErrorCode::ConfigError, "sweeps: unknown sweep '" + s + "'");
    spec.sweeps.push_back(*k);
  }
  if (!o.noise_values.empty()) spec.noise_values = parse_list(o.noise_values, "noise-values");
  if (!o.hole_values.empty()) spec.hole_values = parse_list(o.hole_values, "hole-values");
  if (!o.sampling_values.empty()) spec.sampling_values = parse_list(o.sampling_values, "sampling-values");
  spec.repetitions = o.reps;
  spec.seed = o.seed;
  spec.samples = o.samples;
  spec.options.k = o.k;
  spec.options.squared = o.squared;
  std::ostringstream table;
  write_csv(table, run_metric_benchmark(spec));
  write_text(o.out, table.str(), rec, out);
}

void eval_poses(const EvalPosesOptions& o, const Globals& g, Record& rec, std::ostream& out) {
  const auto gt = load_poses(o.gt, g, rec);
  const auto est = load_poses(o.est, g, rec);
  const TransformError e = transform_error(gt, est, translation_scale(o.translation_unit));
  const json doc = {{"mean_abs", e.mean_abs},
                    {"rotation_deg", e.rotation_deg},
                    {"translation_m", e.translation_m},
                    {"per_scan", e.per_scan},
                    {"translation_unit", o.translation_unit}};
  if (o.out.empty()) {
    out << doc.dump(2) << '\n';
  } else {
    io::write_json(o.out, doc);
    rec.outputs.push_back(o.out);
  }
}

// ---- convert --------------------------------------------------------------

struct ConvertOptions {
  std::string in;
  std::string out;
  bool ascii = false;
  bool float32 = false;
};

void convert(const ConvertOptions& o, const Globals& g, Record& rec) {
  const auto in_ext = lower_ext(o.in), out_ext = lower_ext(o.out);
  io::PlyWriteOptions ply;
  ply.encoding = o.ascii ? io::PlyEncoding::Ascii : io::PlyEncoding::BinaryLittleEndian;
  ply.scalar = o.float32 ? io::PlyScalar::Float32 : io::PlyScalar::Float64;
  if (in_ext == ".json" || out_ext == ".json") {
    if (in_ext != out_ext) throw Error(ErrorCode::ConfigError, "convert: poses convert only to .json");
    io::write_poses(o.out, load_poses(o.in, g, rec));
  } else if (in_ext == ".ply") {
    if (out_ext != ".ply") throw Error(ErrorCode::ConfigError, "convert: a point cloud converts only to .ply");
    io::write_ply(o.out, load_cloud(o.in, g, rec), ply);
  } else if (is_mesh_path(o.in)) {
    const TriangleMesh mesh = load_mesh(o.in, g, rec);
    if (out_ext == ".ply") {
      PointCloud verts;
      verts.points = mesh.vertices;
      io::write_ply(o.out, verts, ply);
    } else if (is_mesh_path(o.out)) {
      io::write_mesh(o.out, mesh);
    } else {
      throw Error(ErrorCode::ConfigError, "convert: unsupported output extension '" + out_ext + "'");
    }
  } else {
    throw Error(ErrorCode::ConfigError, "convert: unsupported input extension '" + in_ext + "'");
  }
  rec.outputs.push_back(o.out);
}

// ---- run (pipeline) -------------------------------------------------------

constexpr const char* kStageOrder[] = {"synth", "scan", "preprocess", "register", "measure", "eval"};

int stage_rank(const std::string& stage) {
  // synth and scan share the first slot
  if (stage == "synth" || stage == "scan") return 0;
  if (stage == "preprocess") return 1;
  if (stage == "register") return 2;
  if (stage == "measure") return 3;
  if (stage == "eval") return 4;
  return -1;
}

std::string arg_of(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_array()) {
    std::string s;
    for (const auto& e : v) s += (s.empty() ? "" : ",") + arg_of(e);
    return s;
  }
  return v.dump();
}

struct PipelineState {
  std::vector<std::string> clouds;
  std::string reference;  // point cloud
  std::string mesh;
  std::string init_poses;
  std::string gt_poses;
  std::string est_poses;
  std::string fused;
  std::string report;
};

struct StagePlan {
  std::string name;
  fs::path dir;
  std::vector<std::vector<std::string>> commands;
};

// Allowed keys per stage, with the flag each one maps to.
const std::map<std::string, std::map<std::string, std::string>>& stage_keys() {
  static const std::map<std::string, std::map<std::string, std::string>> keys = {
      {"synth",
       {{"kind", "--kind"},
        {"noise_std", "--noise-std"},
        {"hole_radius", "--hole-radius"},
        {"sampling_factor", "--sampling-factor"},
        {"samples", "--samples"},
        {"segments", "--segments"},
        {"seed", "--seed"}}},
      {"scan",
       {{"mesh", "--mesh"},
        {"views", "--views"},
        {"stride", "--stride"},
        {"perturb", "--perturb"},
        {"min_separation", "--min-separation"},
        {"seed", "--seed"}}},
      {"preprocess",
       {{"crop", "--crop"},
        {"outlier_k", "--outlier-k"},
        {"outlier_std", "--outlier-std"},
        {"voxel", "--voxel"},
        {"normals_k", "--normals-k"},
        {"viewpoint", "--viewpoint"}}},
      {"register",
       {{"method", "--method"},
        {"voxel_size", "--voxel-size"},
        {"distance_mult", "--distance-mult"},
        {"prune_div", "--prune-div"},
        {"downsample", "--downsample"},
        {"levels", "--levels"},
        {"gicp_epsilon", "--gicp-epsilon"},
        {"max_iterations", "--max-iterations"},
        {"fitness_floor", "--fitness-floor"},
        {"normals_k", "--normals-k"}}},
      {"measure",
       {{"metric", "--metric"},
        {"reference", "--reference"},
        {"k", "--k"},
        {"squared", "--squared"},
        {"bins", "--bins"},
        {"emd_max_points", "--emd-max-points"}}},
      {"eval", {{"kind", ""}, {"translation_unit", "--translation-unit"}}},
  };
  return keys;
}

std::vector<StagePlan> plan_pipeline(const json& config, const fs::path& out_dir, std::uint64_t master_seed) {
  const auto& stages = config.at("stages");
  if (!stages.is_array() || stages.empty()) throw Error(ErrorCode::ConfigError, "stages: expected a non-empty array");
  std::vector<StagePlan> plans;
  PipelineState st;
  int last_rank = -1;
  for (std::size_t si = 0; si < stages.size(); ++si) {
    const json& s = stages[si];
    const std::string where = "stages[" + std::to_string(si) + "]";
    if (!s.is_object() || !s.contains("stage") || !s["stage"].is_string())
      throw Error(ErrorCode::ConfigError, where + ".stage: missing or not a string");
    const std::string name = s["stage"].get<std::string>();
    const int rank = stage_rank(name);
    if (rank < 0) throw Error(ErrorCode::ConfigError, where + ".stage: unknown stage '" + name + "'");
    if (rank <= last_rank)
      throw Error(ErrorCode::ConfigError, where + ".stage: '" + name + "' is out of order (synth|scan, preprocess, register, measure, eval)");
    last_rank = rank;
    const auto& keys = stage_keys().at(name);
    for (const auto& [key, value] : s.items()) {
      if (key == "stage") continue;
      if (!keys.count(key)) throw Error(ErrorCode::ConfigError, where + "." + key + ": unknown field for stage '" + name + "'");
      (void)value;
    }
    // Enumerated values are checked here so the error can name the field.
    if (name == "synth" && s.contains("kind") && !parse_shape_kind(arg_of(s["kind"])))
      throw Error(ErrorCode::ConfigError, where + ".kind: unknown shape '" + arg_of(s["kind"]) + "'");
    if (name == "measure" && (!s.contains("metric") || !parse_metric_kind(arg_of(s["metric"]))))
      throw Error(ErrorCode::ConfigError, where + ".metric: unknown metric '" +
                                              (s.contains("metric") ? arg_of(s["metric"]) : std::string()) + "'");
    if (name == "register" && s.contains("method")) {
      try {
        parse_multiview_method(arg_of(s["method"]));
      } catch (const Error&) {
        throw Error(ErrorCode::ConfigError, where + ".method: unknown method '" + arg_of(s["method"]) + "'");
      }
    }

    const fs::path dir = out_dir / (std::to_string(si) + "_" + name);
    auto flags = [&](std::vector<std::string>& cmd, std::initializer_list<const char*> skip = {}) {
      for (const auto& [key, value] : s.items()) {
        if (key == "stage") continue;
        bool skipped = false;
        for (const char* k : skip) skipped |= key == k;
        if (skipped) continue;
        const std::string& flag = keys.at(key);
        if (value.is_boolean()) {
          if (value.get<bool>()) cmd.push_back(flag);
          continue;
        }
        cmd.push_back(flag);
        cmd.push_back(arg_of(value));
      }
    };
    const std::string stage_seed = std::to_string(derive_seed(master_seed, si));
    StagePlan plan{name, dir, {}};
    if (name == "synth") {
      std::vector<std::string> cmd{"synth", "shape", "--out-dir", dir.string()};
      if (!s.contains("seed")) cmd.insert(cmd.end(), {"--seed", stage_seed});
      flags(cmd);
      plan.commands.push_back(cmd);
      st.clouds = {(dir / "test.ply").string()};
      st.reference = (dir / "reference.ply").string();
      st.mesh = (dir / "mesh.obj").string();
    } else if (name == "scan") {
      std::vector<std::string> cmd{"scan", "--out-dir", dir.string()};
      if (!s.contains("seed")) cmd.insert(cmd.end(), {"--seed", stage_seed});
      flags(cmd);
      plan.commands.push_back(cmd);
      const std::size_t views = s.contains("views") ? s["views"].get<std::size_t>() : 8;
      st.clouds.clear();
      for (std::size_t i = 0; i < views; ++i) {
        char file[32];
        std::snprintf(file, sizeof file, "scan_%03zu.ply", i);
        st.clouds.push_back((dir / file).string());
      }
      st.init_poses = (dir / "perturbed_poses.json").string();
      st.gt_poses = (dir / "gt_poses.json").string();
      st.mesh = s.contains("mesh") ? arg_of(s["mesh"]) : std::string();
      if (st.mesh.empty()) {
        st.mesh = (dir / "bunny_proxy.obj").string();
        plan.commands.push_back({"synth", "bunny", "--out", st.mesh});
      }
    } else if (name == "preprocess") {
      if (st.clouds.empty()) throw Error(ErrorCode::ConfigError, where + ": no clouds to preprocess");
      std::vector<std::string> next;
      for (const auto& in : st.clouds) {
        const std::string out = (dir / fs::path(in).filename()).string();
        std::vector<std::string> cmd{"preprocess", "--in", in, "--out", out};
        flags(cmd);
        plan.commands.push_back(cmd);
        next.push_back(out);
      }
      st.clouds = next;
    } else if (name == "register") {
      if (st.clouds.size() < 2) throw Error(ErrorCode::ConfigError, where + ": registration needs at least 2 clouds");
      st.fused = (dir / "fused.ply").string();
      st.est_poses = (dir / "est_poses.json").string();
      std::vector<std::string> cmd{"register", "--out", st.fused, "--out-poses", st.est_poses};
      if (!st.init_poses.empty()) cmd.insert(cmd.end(), {"--init", st.init_poses});
      flags(cmd);
      cmd.insert(cmd.end(), st.clouds.begin(), st.clouds.end());
      plan.commands.push_back(cmd);
    } else if (name == "measure") {
      const std::string query = !st.fused.empty() ? st.fused : (st.clouds.empty() ? "" : st.clouds.front());
      if (query.empty()) throw Error(ErrorCode::ConfigError, where + ": nothing to measure");
      const bool to_mesh = arg_of(s["metric"]) == "cloud-to-mesh";
      std::string reference = s.contains("reference") ? arg_of(s["reference"]) : (to_mesh ? st.mesh : st.reference);
      if (reference.empty()) throw Error(ErrorCode::ConfigError, where + ".reference: required here");
      st.report = (dir / "report.json").string();
      std::vector<std::string> cmd{"measure", "--query", query, "--reference", reference, "--out", st.report,
                                   "--per-point", (dir / "distances.ply").string()};
      flags(cmd, {"reference"});
      if (arg_of(s["metric"]) == "earth-movers") cmd.erase(cmd.begin() + 7, cmd.begin() + 9);
      plan.commands.push_back(cmd);
    } else if (name == "eval") {
      const std::string kind = s.contains("kind") ? arg_of(s["kind"]) : "poses";
      if (kind != "poses") throw Error(ErrorCode::ConfigError, where + ".kind: only 'poses' runs inside a pipeline");
      if (st.gt_poses.empty() || st.est_poses.empty())
        throw Error(ErrorCode::ConfigError, where + ": pose evaluation needs a scan and a register stage");
      std::vector<std::string> cmd{"eval", "poses", "--gt", st.gt_poses, "--est", st.est_poses, "--out",
                                   (dir / "pose_error.json").string()};
      flags(cmd, {"kind"});
      plan.commands.push_back(cmd);
    }
    for (auto& cmd : plan.commands) {
      cmd.insert(cmd.begin(), {"--manifest", (dir / "manifest.json").string()});
      if (plan.commands.size() > 1) {
        // one manifest per command inside a multi-command stage
        const std::size_t idx = static_cast<std::size_t>(&cmd - plan.commands.data());
        cmd[1] = (dir / ("manifest_" + std::to_string(idx) + ".json")).string();
      }
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

// ---- manifests ------------------------------------------------------------

json parameters_of(const CLI::App* app) {
  json params = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_name().empty() || opt->get_name() == "--help" || opt->get_name() == "-h,--help") continue;
    std::string key = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (key == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      params[key] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      params[key] = opt->get_default_str();
    }
  }
  for (const CLI::App* sub : app->get_subcommands()) params[sub->get_name()] = parameters_of(sub);
  return params;
}

json file_entries(const std::vector<std::string>& paths) {
  json arr = json::array();
  for (const auto& p : paths) arr.push_back({{"path", p}, {"fnv1a64", file_hash(p)}});
  return arr;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidParameter:
    case ErrorCode::IoError:
    case ErrorCode::ParseError:
      return kUserError;
    default:
      return kRuntimeError;
  }
}

}  // namespace

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view point cloud registration, synthetic scanning and surface distance metrics.", "mvfuse"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option defaults; nested objects address subcommands, flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Globals g;
  app.add_option("--unit", g.unit, "Unit of ingested geometry; everything is converted to meters")
      ->check(CLI::IsMember({"m", "mm"}))
      ->capture_default_str();
  app.add_option("--manifest", g.manifest, "Write a manifest (command, parameters, input/output hashes) here");
  app.add_flag("--timing", g.timing, "Record wall-clock runtimes (makes outputs run-dependent)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate benchmark shapes or the bunny stand-in");
  synth->require_subcommand(1);
  synth->fallthrough();
  SynthShapeOptions shape_o;
  auto* shape = synth->add_subcommand("shape", "Reference/test clouds of a shape with a 0.5 m ground-truth offset");
  shape->add_option("--kind", shape_o.kind, "plane, slope, sine or triangle")->capture_default_str();
  shape->add_option("--noise-std", shape_o.noise_std, "Gaussian noise std on the test cloud (m)")->capture_default_str();
  shape->add_option("--hole-radius", shape_o.hole_radius, "Hole radius around the x/y centroid (m)")->capture_default_str();
  shape->add_option("--sampling-factor", shape_o.sampling_factor, "Fraction of test points removed, in [0, 1]")
      ->capture_default_str();
  shape->add_option("--samples", shape_o.samples, "Surface samples in the reference cloud")->capture_default_str();
  shape->add_option("--segments", shape_o.segments, "Quad grid resolution of the mesh")->capture_default_str();
  shape->add_option("--seed", shape_o.seed, "RNG seed")->capture_default_str();
  shape->add_option("--out-dir", shape_o.out_dir, "Output directory")->required();
  SynthBunnyOptions bunny_o;
  auto* bunny = synth->add_subcommand("bunny", "Write the procedural bunny stand-in mesh");
  bunny->add_option("--subdivisions", bunny_o.subdivisions, "Icosphere subdivisions per part")->capture_default_str();
  bunny->add_option("--out", bunny_o.out, "Output .obj or .stl")->required();

  // scan
  ScanOptions scan_o;
  auto* scan_cmd = app.add_subcommand("scan", "Render partial scans of a mesh from Poisson-disc viewpoints");
  scan_cmd->add_option("--mesh", scan_o.mesh, "Input .obj/.stl (default: the bunny stand-in)");
  scan_cmd->add_option("--views", scan_o.views, "Number of scans")->capture_default_str();
  scan_cmd->add_option("--stride", scan_o.stride, "Cast one ray every stride pixels")->capture_default_str();
  scan_cmd->add_option("--perturb", scan_o.perturb, "Pose perturbation range lo,hi (mm and degrees)")
      ->delimiter(',')
      ->expected(2)
      ->capture_default_str();
  scan_cmd->add_option("--min-separation", scan_o.min_separation, "Poisson-disc geodesic separation (rad)")
      ->capture_default_str();
  scan_cmd->add_option("--seed", scan_o.seed, "RNG seed")->capture_default_str();
  scan_cmd->add_option("--out-dir", scan_o.out_dir, "Output directory")->required();

  // preprocess
  PreprocessOptions pre_o;
  auto* pre = app.add_subcommand("preprocess", "Crop, outlier-filter, downsample and estimate normals");
  pre->add_option("--in", pre_o.in, "Input .ply")->required();
  pre->add_option("--out", pre_o.out, "Output .ply")->required();
  pre->add_option("--crop", pre_o.crop, "Box xmin,ymin,zmin,xmax,ymax,zmax")->delimiter(',')->expected(6);
  pre->add_option("--outlier-k", pre_o.outlier_k, "Neighbors for the statistical outlier filter")->capture_default_str();
  pre->add_option("--outlier-std", pre_o.outlier_std, "Std ratio of the outlier filter (inf disables)")
      ->capture_default_str();
  pre->add_option("--voxel", pre_o.voxel, "Voxel size for downsampling (0 disables)")->capture_default_str();
  pre->add_option("--normals-k", pre_o.normals_k, "Estimate normals with k neighbors (0 keeps them)")
      ->capture_default_str();
  pre->add_option("--viewpoint", pre_o.viewpoint, "Normal orientation viewpoint x,y,z")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();

  // register
  RegisterOptions reg_o;
  auto* reg = app.add_subcommand("register", "Align scans and write the fused cloud");
  reg->add_option("--method", reg_o.method, "global-icp, pose-graph or refined-pose-graph")->capture_default_str();
  reg->add_option("--voxel-size", reg_o.voxel_size, "Voxel size (m)")->capture_default_str();
  reg->add_option("--distance-mult", reg_o.distance_mult, "Correspondence distance = voxel * m, m in [1, 4]")
      ->capture_default_str();
  reg->add_option("--prune-div", reg_o.prune_div, "Edge prune threshold = voxel / p, p in [2, 4]")
      ->capture_default_str();
  reg->add_option("--downsample", reg_o.downsample, "auto (skip below 100k points), always or never")
      ->capture_default_str();
  reg->add_option("--levels", reg_o.levels, "Voxel multipliers, coarse to fine")->delimiter(',')->capture_default_str();
  reg->add_option("--gicp-epsilon", reg_o.gicp_epsilon, "Surface covariance regularizer in (0, 1)")
      ->capture_default_str();
  reg->add_option("--max-iterations", reg_o.max_iterations, "Pairwise ICP iteration cap")->capture_default_str();
  reg->add_option("--fitness-floor", reg_o.fitness_floor, "Minimum loop-closure fitness")->capture_default_str();
  reg->add_option("--normals-k", reg_o.normals_k, "k for clouds without normals")->capture_default_str();
  reg->add_option("--init", reg_o.init, "Initial poses .json (default: identity)");
  reg->add_option("--out", reg_o.out, "Fused .ply")->required();
  reg->add_option("--out-poses", reg_o.out_poses, "Estimated poses .json");
  reg->add_option("scans", reg_o.scans, "Scan .ply files")->required();

  // measure
  MeasureOptions mea_o;
  auto* mea = app.add_subcommand("measure", "Distance between a query cloud and a reference cloud or mesh");
  mea->add_option("--metric", mea_o.metric,
                  "chamfer, hausdorff, earth-movers, plane-lsq, plane-quadratic, plane-triangulation, cloud-to-mesh")
      ->required();
  mea->add_option("--query", mea_o.query, "Query .ply")->required();
  mea->add_option("--reference", mea_o.reference, "Reference .ply (or .obj/.stl for cloud-to-mesh)")->required();
  mea->add_option("--k", mea_o.k, "Neighborhood size (0: 20 for plane fits, 12 for triangulation)")
      ->capture_default_str();
  mea->add_flag("--squared", mea_o.squared, "Chamfer on squared distances");
  mea->add_option("--bins", mea_o.bins, "Histogram bins")->capture_default_str();
  mea->add_option("--emd-max-points", mea_o.emd_max_points, "Earth mover's size cap")->capture_default_str();
  mea->add_option("--out", mea_o.out, "Report .json (default: standard output)");
  mea->add_option("--per-point", mea_o.per_point, "Query .ply with a per-point distance property");

  // eval
  auto* eval = app.add_subcommand("eval", "Benchmarks and pose-error evaluation");
  eval->require_subcommand(1);
  eval->fallthrough();
  EvalRegistrationOptions er_o;
  auto* er = eval->add_subcommand("registration", "Transform error per perturbation range and method (CSV)");
  er->add_option("--mesh", er_o.mesh, "Mesh to scan (default: the bunny stand-in)");
  er->add_option("--ranges", er_o.ranges, "Comma list of lo:hi ranges (mm and degrees)")->capture_default_str();
  er->add_option("--methods", er_o.methods, "all or a comma list of methods")->capture_default_str();
  er->add_option("--reps", er_o.reps, "Repetitions per range")->capture_default_str();
  er->add_option("--seed", er_o.seed, "Master seed")->capture_default_str();
  er->add_option("--views", er_o.views, "Scans per repetition")->capture_default_str();
  er->add_option("--stride", er_o.stride, "Render stride")->capture_default_str();
  er->add_option("--voxel-size", er_o.voxel_size, "Voxel size (m)")->capture_default_str();
  er->add_option("--distance-mult", er_o.distance_mult, "Distance multiplier m")->capture_default_str();
  er->add_option("--prune-div", er_o.prune_div, "Prune divisor p")->capture_default_str();
  er->add_option("--downsample", er_o.downsample, "auto, always or never")->capture_default_str();
  er->add_option("--levels", er_o.levels, "Voxel multipliers, coarse to fine")->delimiter(',')->capture_default_str();
  er->add_option("--gicp-epsilon", er_o.gicp_epsilon, "Surface covariance regularizer")->capture_default_str();
  er->add_option("--translation-unit", er_o.translation_unit, "Unit of translation entries in the error: m or mm")
      ->capture_default_str();
  er->add_option("--out", er_o.out, "Per-run CSV (default: standard output)");
  er->add_option("--summary", er_o.summary, "Per range/method averages CSV");
  EvalMetricsOptions em_o;
  auto* em = eval->add_subcommand("metrics", "Metric deviation from the 0.5 m ground truth over sweeps (CSV)");
  em->add_option("--shapes", em_o.shapes, "all or a comma list")->capture_default_str();
  em->add_option("--metrics", em_o.metrics, "all or a comma list")->capture_default_str();
  em->add_option("--sweeps", em_o.sweeps, "Comma list of noise, hole, sampling")->capture_default_str();
  em->add_option("--noise-values", em_o.noise_values, "Comma list of noise std values (m)");
  em->add_option("--hole-values", em_o.hole_values, "Comma list of hole radii (m)");
  em->add_option("--sampling-values", em_o.sampling_values, "Comma list of sampling factors");
  em->add_option("--reps", em_o.reps, "Repetitions per cell")->capture_default_str();
  em->add_option("--seed", em_o.seed, "Master seed")->capture_default_str();
  em->add_option("--samples", em_o.samples, "Reference samples per shape")->capture_default_str();
  em->add_option("--k", em_o.k, "Neighborhood size for plane metrics (0: defaults)")->capture_default_str();
  em->add_flag("--squared", em_o.squared, "Chamfer on squared distances");
  em->add_option("--out", em_o.out, "CSV (default: standard output)");
  EvalPosesOptions ep_o;
  auto* ep = eval->add_subcommand("poses", "Transform error between two pose files");
  ep->add_option("--gt", ep_o.gt, "Ground-truth poses .json")->required();
  ep->add_option("--est", ep_o.est, "Estimated poses .json")->required();
  ep->add_option("--translation-unit", ep_o.translation_unit, "m or mm")->capture_default_str();
  ep->add_option("--out", ep_o.out, "Report .json (default: standard output)");

  // convert
  ConvertOptions cv_o;
  auto* cv = app.add_subcommand("convert", "Convert between .ply, .obj, .stl and pose .json");
  cv->add_option("in", cv_o.in, "Input file")->required();
  cv->add_option("out", cv_o.out, "Output file")->required();
  cv->add_flag("--ascii", cv_o.ascii, "ASCII PLY output");
  cv->add_flag("--float32", cv_o.float32, "float32 PLY coordinates");

  // run / replay
  std::string pipeline_path, out_dir_override;
  std::optional<std::uint64_t> seed_override;
  auto* run_cmd = app.add_subcommand("run", "Execute a pipeline config (stages synth|scan, preprocess, register, measure, eval)");
  run_cmd->add_option("pipeline", pipeline_path, "Pipeline .json")->required();
  run_cmd->add_option("--out-dir", out_dir_override, "Override the config's out_dir");
  run_cmd->add_option("--seed", seed_override, "Override the config's seed");
  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-execute the command recorded in a manifest");
  replay->add_option("manifest", replay_path, "Manifest .json")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUserError;
  }

  Record rec;
  const auto start = std::chrono::steady_clock::now();
  const CLI::App* chosen = app.get_subcommands().front();
  try {
    if (synth->parsed()) {
      if (shape->parsed()) synth_shape(shape_o, rec);
      if (bunny->parsed()) synth_bunny(bunny_o, rec);
    } else if (scan_cmd->parsed()) {
      scan(scan_o, g, rec);
    } else if (pre->parsed()) {
      preprocess(pre_o, g, rec);
    } else if (reg->parsed()) {
      register_scans(reg_o, g, rec, err);
    } else if (mea->parsed()) {
      measure_cmd(mea_o, g, rec, out);
    } else if (eval->parsed()) {
      if (er->parsed()) eval_registration(er_o, g, rec, out);
      if (em->parsed()) eval_metrics(em_o, rec, out);
      if (ep->parsed()) eval_poses(ep_o, g, rec, out);
    } else if (cv->parsed()) {
      convert(cv_o, g, rec);
    } else if (replay->parsed()) {
      const json doc = io::read_json(replay_path);
      if (!doc.contains("command") || !doc["command"].is_array())
        throw Error(ErrorCode::ConfigError, "command: missing from manifest " + replay_path);
      return run(doc["command"].get<std::vector<std::string>>(), out, err);
    } else if (run_cmd->parsed()) {
      const json config = io::read_json(pipeline_path);
      if (!config.is_object()) throw Error(ErrorCode::ConfigError, "pipeline: top level must be an object");
      for (const auto& [key, value] : config.items()) {
        if (key != "stages" && key != "seed" && key != "out_dir" && key != "unit")
          throw Error(ErrorCode::ConfigError, key + ": unknown field");
        (void)value;
      }
      if (!config.contains("stages")) throw Error(ErrorCode::ConfigError, "stages: required");
      const std::string out_dir = !out_dir_override.empty() ? out_dir_override
                                  : config.contains("out_dir") ? config["out_dir"].get<std::string>()
                                                               : std::string("pipeline_out");
      const std::uint64_t seed =
          seed_override ? *seed_override : (config.contains("seed") ? config["seed"].get<std::uint64_t>() : 1);
      const std::string unit = config.contains("unit") ? config["unit"].get<std::string>() : g.unit;
      if (unit != "m" && unit != "mm") throw Error(ErrorCode::ConfigError, "unit: expected m or mm");
      const auto plans = plan_pipeline(config, out_dir, seed);
      ensure_dir(out_dir);
      for (const auto& plan : plans) {
        for (auto cmd : plan.commands) {
          cmd.insert(cmd.begin(), {"--unit", unit});
          if (g.timing) cmd.insert(cmd.begin(), "--timing");
          ensure_dir(plan.dir);
          err << "[" << plan.name << "]";
          for (const auto& a : cmd) err << ' ' << a;
          err << '\n';
          const int code = run(cmd, out, err);
          if (code != kOk) {
            err << "pipeline stopped: stage '" << plan.name << "' failed\n";
            return code;
          }
        }
      }
      rec.inputs.push_back(pipeline_path);
    }
  } catch (const Error& e) {
    err << "error [" << chosen->get_name() << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error [" << chosen->get_name() << "]: " << e.what() << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    err << "error [" << chosen->get_name() << "]: " << e.what() << '\n';
    return kRuntimeError;
  }

  if (!g.manifest.empty()) {
    try {
      json manifest = {{"tool", "mvfuse"},
                       {"command", args},
                       {"subcommand", chosen->get_name()},
                       {"parameters", parameters_of(&app)},
                       {"inputs", file_entries(rec.inputs)},
                       {"outputs", file_entries(rec.outputs)}};
      if (g.timing)
        manifest["runtime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      io::write_json(g.manifest, manifest);
    } catch (const Error& e) {
      err << "error [manifest]: " << e.what() << '\n';
      return exit_code_for(e.code());
    }
  }
  return kOk;
}

}  // namespace mvfuse::cli
