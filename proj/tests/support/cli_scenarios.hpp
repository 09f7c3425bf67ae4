#pragma once

// One invocation per CLI subcommand, each run twice into the same directory;
// every file it leaves behind (manifests included) and its stdout must match.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace mvfuse::testing {

namespace fs = std::filesystem;

/// Runs a command line (without program name) with `cwd` as the working
/// directory; returns the exit code and fills `out` with stdout.
using CliRunner = std::function<int(const std::vector<std::string>& args, const fs::path& cwd, std::string& out)>;

struct CliScenario {
  std::string name;
  std::vector<std::string> args;  // paths relative to the scenario directory
};

struct CliCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

/// Inputs shared by the scenarios, written under in/ of the root directory.
inline std::vector<std::vector<std::string>> cli_setup_commands() {
  return {
      {"synth", "shape", "--kind", "sine", "--samples", "400", "--noise-std", "0.01", "--out-dir", "in/shape"},
      {"synth", "bunny", "--subdivisions", "2", "--out", "in/bunny.obj"},
      {"scan", "--mesh", "in/bunny.obj", "--views", "3", "--stride", "8", "--perturb", "1,3", "--seed", "3",
       "--out-dir", "in/scans"},
  };
}

inline std::vector<CliScenario> cli_scenarios() {
  const std::string pipeline = "in/pipeline.json";
  return {
      {"synth-shape",
       {"--manifest", "m.json", "synth", "shape", "--kind", "triangle", "--noise-std", "0.02", "--hole-radius", "0.2",
        "--sampling-factor", "0.3", "--samples", "500", "--seed", "9", "--out-dir", "o"}},
      {"synth-bunny", {"--manifest", "m.json", "synth", "bunny", "--subdivisions", "2", "--out", "o/bunny.stl"}},
      {"scan",
       {"--manifest", "m.json", "scan", "--mesh", "../in/bunny.obj", "--views", "3", "--stride", "8", "--perturb",
        "3,6", "--seed", "11", "--out-dir", "o"}},
      {"preprocess",
       {"--manifest", "m.json", "preprocess", "--in", "../in/scans/scan_000.ply", "--out", "o.ply", "--crop",
        "-1,-1,-1,1,1,1", "--outlier-k", "10", "--outlier-std", "2", "--voxel", "0.002", "--normals-k", "15"}},
      {"register",
       {"--manifest", "m.json", "register", "--method", "pose-graph", "--voxel-size", "0.003", "--downsample",
        "always", "--levels", "4,1", "--init", "../in/scans/perturbed_poses.json", "--out", "fused.ply",
        "--out-poses", "poses.json", "../in/scans/scan_000.ply", "../in/scans/scan_001.ply",
        "../in/scans/scan_002.ply"}},
      {"measure-chamfer",
       {"--manifest", "m.json", "measure", "--metric", "chamfer", "--query", "../in/shape/test.ply", "--reference",
        "../in/shape/reference.ply", "--out", "r.json", "--per-point", "d.ply"}},
      {"measure-quadratic",
       {"--manifest", "m.json", "measure", "--metric", "plane-quadratic", "--query", "../in/shape/test.ply",
        "--reference", "../in/shape/reference.ply", "--out", "r.json"}},
      {"measure-emd",
       {"measure", "--metric", "earth-movers", "--query", "../in/shape/test.ply", "--reference",
        "../in/shape/reference.ply"}},
      {"measure-mesh",
       {"--manifest", "m.json", "measure", "--metric", "cloud-to-mesh", "--query", "../in/shape/test.ply",
        "--reference", "../in/shape/mesh.obj", "--out", "r.json", "--per-point", "d.ply"}},
      {"eval-poses",
       {"--manifest", "m.json", "eval", "poses", "--gt", "../in/scans/gt_poses.json", "--est",
        "../in/scans/perturbed_poses.json", "--translation-unit", "mm", "--out", "e.json"}},
      {"eval-metrics",
       {"--manifest", "m.json", "eval", "metrics", "--shapes", "plane,sine", "--metrics", "chamfer,plane-lsq",
        "--sweeps", "noise,sampling", "--noise-values", "0,0.05", "--sampling-values", "0.5", "--reps", "2",
        "--samples", "300", "--out", "m.csv"}},
      {"eval-registration",
       {"--manifest", "m.json", "eval", "registration", "--mesh", "../in/bunny.obj", "--ranges", "0:1", "--reps", "1",
        "--views", "3", "--stride", "8", "--levels", "4,1", "--out", "r.csv", "--summary", "s.csv"}},
      {"convert",
       {"--manifest", "m.json", "--unit", "mm", "convert", "--ascii", "--float32", "../in/scans/scan_001.ply",
        "o.ply"}},
      {"convert-mesh", {"convert", "../in/bunny.obj", "bunny.stl"}},
      {"run", {"run", "../" + pipeline, "--out-dir", "p"}},
      {"replay", {"replay", "../replay_manifest.json"}},
  };
}

inline std::string cli_pipeline_json() {
  return R"({"seed": 5, "stages": [
  {"stage": "synth", "kind": "slope", "samples": 300, "noise_std": 0.005},
  {"stage": "preprocess", "voxel": 0.01},
  {"stage": "measure", "metric": "plane-lsq"}
]})";
}

/// Prepares the shared inputs, then runs every scenario twice.
inline std::vector<CliCheck> run_cli_determinism(const CliRunner& runner, const fs::path& root) {
  std::vector<CliCheck> checks;
  fs::remove_all(root);
  fs::create_directories(root / "in");
  std::string out;
  for (const auto& cmd : cli_setup_commands()) {
    if (runner(cmd, root, out) != 0) {
      checks.push_back({"setup", false, "setup command failed: " + cmd.front()});
      return checks;
    }
  }
  {
    std::ofstream(root / "in/pipeline.json") << cli_pipeline_json();
    // a manifest to replay; its relative paths resolve against the replay cwd
    std::vector<std::string> cmd{"--manifest", "replay_manifest.json", "synth", "shape", "--kind", "plane",
                                 "--samples", "200", "--out-dir", "replayed"};
    if (runner(cmd, root, out) != 0) {
      checks.push_back({"setup", false, "manifest for replay"});
      return checks;
    }
  }
  for (const auto& sc : cli_scenarios()) {
    CliCheck check{sc.name, true, ""};
    const fs::path dir = root / ("sc_" + sc.name);
    std::map<std::string, std::string> first;
    std::string first_out;
    for (int pass = 0; pass < 2 && check.ok; ++pass) {
      fs::remove_all(dir);
      fs::create_directories(dir);
      std::string stdout_text;
      const int code = runner(sc.args, dir, stdout_text);
      if (code != 0) {
        check.ok = false;
        check.detail = "exit code " + std::to_string(code);
        break;
      }
      auto files = snapshot(dir);
      if (files.empty() && stdout_text.empty()) {
        check.ok = false;
        check.detail = "no artifacts";
      } else if (pass == 0) {
        first = std::move(files);
        first_out = std::move(stdout_text);
      } else if (files != first || stdout_text != first_out) {
        check.ok = false;
        for (const auto& [k, v] : files)
          if (!first.count(k) || first.at(k) != v) check.detail += k + " ";
        if (stdout_text != first_out) check.detail += "<stdout>";
      } else {
        check.detail = std::to_string(files.size()) + " files";
      }
    }
    checks.push_back(check);
  }
  return checks;
}

}  // namespace mvfuse::testing
