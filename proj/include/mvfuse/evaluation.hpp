#pragma once

#include "mvfuse/metrics.hpp"
#include "mvfuse/multiview.hpp"
#include "mvfuse/rigid_transform.hpp"
#include "mvfuse/shape_synth.hpp"
#include "mvfuse/virtual_scanner.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mvfuse {

struct TransformError {
  std::vector<double> per_scan;  // mean |gt - est| over the 16 matrix entries
  double mean_abs = 0.0;
  double rotation_deg = 0.0;     // mean geodesic angle
  double translation_m = 0.0;    // mean Euclidean distance
};

/// Both lists are gauge-fixed to their first pose before comparison.
/// `translation_scale` multiplies translation entries (1000 compares in mm).
TransformError transform_error(const std::vector<RigidTransform>& gt, const std::vector<RigidTransform>& est,
                               double translation_scale = 1.0);

/// Translation bounds in mm and rotation bounds in degrees share the numbers.
struct PerturbationRange {
  double lo = 0.0;
  double hi = 0.0;
};

inline const std::vector<PerturbationRange> kTableRanges = {{0, 1}, {1, 3}, {3, 6}, {6, 10}, {10, 15}};

/// Registration settings used by the benchmark: 3 mm voxels everywhere and a
/// coarse pass at 8x the voxel before the fine one.
PoseGraphParams benchmark_pose_graph_params();

struct RegistrationBenchmarkSpec {
  std::vector<PerturbationRange> ranges = kTableRanges;
  std::vector<MultiviewMethod> methods = {std::begin(kAllMultiviewMethods), std::end(kAllMultiviewMethods)};
  std::size_t repetitions = 10;
  std::uint64_t seed = 1;
  std::size_t views = 8;
  int stride = 4;
  CameraModel camera;
  PoseGraphParams params = benchmark_pose_graph_params();
  double translation_scale = 1.0;
  bool timing = false;  // runtime_s stays 0 unless set, so output is reproducible

  void validate() const;
};

struct RegistrationRow {
  PerturbationRange range;
  MultiviewMethod method = MultiviewMethod::GlobalIcp;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // error code name on failure
  TransformError error;
  double runtime_s = 0.0;
};

/// Renders the scans once, then for every (range, rep) cell draws one set of
/// perturbed poses from derive_seed and registers it with every method.
/// Failures are recorded in the row, not thrown.
std::vector<RegistrationRow> run_registration_benchmark(const TriangleMesh& mesh, const RegistrationBenchmarkSpec& spec);

/// Seed of one (range, rep) cell.
std::uint64_t registration_cell_seed(std::uint64_t master, std::size_t range_index, std::size_t rep);

struct RegistrationSummary {
  PerturbationRange range;
  MultiviewMethod method = MultiviewMethod::GlobalIcp;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double mean_abs = 0.0;  // over successful runs
  double rotation_deg = 0.0;
  double translation_m = 0.0;
};

std::vector<RegistrationSummary> summarize(const std::vector<RegistrationRow>& rows);

void write_csv(std::ostream& out, const std::vector<RegistrationRow>& rows);
void write_csv(std::ostream& out, const std::vector<RegistrationSummary>& rows);

enum class SweepKind { Noise, Hole, Sampling };

inline constexpr SweepKind kAllSweeps[] = {SweepKind::Noise, SweepKind::Hole, SweepKind::Sampling};

std::string_view to_string(SweepKind kind);
std::optional<SweepKind> parse_sweep_kind(std::string_view name);

struct MetricBenchmarkSpec {
  std::vector<ShapeKind> shapes = {std::begin(kAllShapes), std::end(kAllShapes)};
  std::vector<MetricKind> metrics = {std::begin(kAllMetrics), std::end(kAllMetrics)};
  std::vector<SweepKind> sweeps = {std::begin(kAllSweeps), std::end(kAllSweeps)};
  std::vector<double> noise_values = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1};
  std::vector<double> hole_values = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> sampling_values = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t repetitions = 10;
  std::uint64_t seed = 1;
  std::size_t samples = 1000;
  int segments = 16;
  MetricOptions options;

  void validate() const;
  const std::vector<double>& values(SweepKind kind) const;
};

struct MetricRow {
  ShapeKind shape = ShapeKind::Plane;
  SweepKind sweep = SweepKind::Noise;
  double value = 0.0;
  MetricKind metric = MetricKind::Chamfer;
  std::size_t runs = 0;  // repetitions that produced a value
  double mean_estimate = 0.0;
  double mean_deviation = 0.0;  // mean |estimate - 0.5|
  std::string status = "ok";    // error code of the first failure when runs == 0
};

/// One row per shape x sweep value x metric. Every repetition builds one
/// metric pair (seeded per cell, shared by all metrics) and averages
/// |estimate - 0.5| over the repetitions that succeed.
std::vector<MetricRow> run_metric_benchmark(const MetricBenchmarkSpec& spec);

/// Keyed on the sweep value itself, so any subset of values reproduces the
/// rows of a full run.
std::uint64_t metric_cell_seed(std::uint64_t master, ShapeKind shape, SweepKind sweep, double value,
                               std::size_t rep);

void write_csv(std::ostream& out, const std::vector<MetricRow>& rows);

}  // namespace mvfuse
