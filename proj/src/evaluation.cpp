#include "mvfuse/evaluation.hpp"

#include "mvfuse/error.hpp"
#include "mvfuse/random.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <numbers>
#include <string>

namespace mvfuse {

TransformError transform_error(const std::vector<RigidTransform>& gt, const std::vector<RigidTransform>& est,
                               double translation_scale) {
  if (gt.size() != est.size())
    throw Error(ErrorCode::SizeMismatch, "ground truth has " + std::to_string(gt.size()) + " poses, estimate has " +
                                             std::to_string(est.size()));
  TransformError out;
  if (gt.empty()) return out;
  const RigidTransform gt0 = gt.front().inverse();
  const RigidTransform est0 = est.front().inverse();
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const RigidTransform a = gt0 * gt[k];
    const RigidTransform b = est0 * est[k];
    Eigen::Matrix4d ma = a.matrix(), mb = b.matrix();
    ma.topRightCorner<3, 1>() *= translation_scale;
    mb.topRightCorner<3, 1>() *= translation_scale;
    const double e = (ma - mb).cwiseAbs().sum() / 16.0;
    out.per_scan.push_back(e);
    out.mean_abs += e;
    out.rotation_deg += (a.inverse() * b).angle() * 180.0 / std::numbers::pi;
    out.translation_m += (a.translation() - b.translation()).norm();
  }
  const double n = static_cast<double>(gt.size());
  out.mean_abs /= n;
  out.rotation_deg /= n;
  out.translation_m /= n;
  return out;
}

}  // namespace mvfuse

namespace mvfuse {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string range_label(const PerturbationRange& r) { return fmt(r.lo) + ":" + fmt(r.hi); }

}  // namespace

PoseGraphParams benchmark_pose_graph_params() {
  PoseGraphParams p;
  p.voxel_size = 0.003;
  p.downsample = DownsampleMode::Always;
  p.levels = {8.0, 1.0};
  return p;
}

void RegistrationBenchmarkSpec::validate() const {
  if (ranges.empty()) throw Error(ErrorCode::ConfigError, "ranges: at least one range required");
  for (const auto& r : ranges)
    if (!(r.lo >= 0.0 && r.hi >= r.lo)) throw Error(ErrorCode::ConfigError, "ranges: need 0 <= lo <= hi");
  if (methods.empty()) throw Error(ErrorCode::ConfigError, "methods: at least one method required");
  if (repetitions < 1) throw Error(ErrorCode::ConfigError, "reps: must be >= 1");
  if (views < 2) throw Error(ErrorCode::ConfigError, "views: must be >= 2");
  if (stride < 1) throw Error(ErrorCode::ConfigError, "stride: must be >= 1");
  if (!(translation_scale > 0.0)) throw Error(ErrorCode::ConfigError, "translation_scale: must be > 0");
  camera.validate();
  params.validate();
}

std::uint64_t registration_cell_seed(std::uint64_t master, std::size_t range_index, std::size_t rep) {
  return derive_seed(derive_seed(master, range_index + 1), rep);
}

std::vector<RegistrationRow> run_registration_benchmark(const TriangleMesh& mesh, const RegistrationBenchmarkSpec& spec) {
  spec.validate();
  const ScanSet scans = simulate_scans(mesh, spec.views, spec.stride, derive_seed(spec.seed, 0), spec.camera);
  std::vector<PointCloud> clouds;
  std::vector<RigidTransform> gt;
  for (const auto& v : scans.views) {
    clouds.push_back(v.scan);
    gt.push_back(v.gt_pose);
  }

  std::vector<RegistrationRow> rows;
  for (std::size_t ri = 0; ri < spec.ranges.size(); ++ri) {
    const PerturbationRange& range = spec.ranges[ri];
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      const std::uint64_t seed = registration_cell_seed(spec.seed, ri, rep);
      const ScanSet perturbed = perturb_poses(scans, {range.lo, range.hi, range.lo, range.hi}, seed);
      std::vector<RigidTransform> init;
      for (const auto& v : perturbed.views) init.push_back(v.perturbed_pose);
      for (MultiviewMethod method : spec.methods) {
        RegistrationRow row;
        row.range = range;
        row.method = method;
        row.rep = rep;
        row.seed = seed;
        const auto start = std::chrono::steady_clock::now();
        try {
          const auto result = register_multiview(clouds, init, method, spec.params);
          row.error = transform_error(gt, result.poses, spec.translation_scale);
        } catch (const Error& e) {
          row.status = std::string(to_string(e.code()));
        }
        if (spec.timing) row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<RegistrationSummary> summarize(const std::vector<RegistrationRow>& rows) {
  std::vector<RegistrationSummary> out;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const RegistrationSummary& s) {
      return s.range.lo == row.range.lo && s.range.hi == row.range.hi && s.method == row.method;
    });
    if (it == out.end()) {
      out.emplace_back();
      out.back().range = row.range;
      out.back().method = row.method;
      it = std::prev(out.end());
    }
    ++it->runs;
    if (row.status != "ok") {
      ++it->failures;
      continue;
    }
    it->mean_abs += row.error.mean_abs;
    it->rotation_deg += row.error.rotation_deg;
    it->translation_m += row.error.translation_m;
  }
  for (auto& s : out) {
    const std::size_t ok = s.runs - s.failures;
    if (ok == 0) {
      s.mean_abs = s.rotation_deg = s.translation_m = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    s.mean_abs /= static_cast<double>(ok);
    s.rotation_deg /= static_cast<double>(ok);
    s.translation_m /= static_cast<double>(ok);
  }
  return out;
}

void write_csv(std::ostream& out, const std::vector<RegistrationRow>& rows) {
  out << "range,method,rep,seed,status,mean_abs,rotation_deg,translation_m,runtime_s\n";
  for (const auto& r : rows)
    out << range_label(r.range) << ',' << to_string(r.method) << ',' << r.rep << ',' << r.seed << ',' << r.status
        << ',' << fmt(r.error.mean_abs) << ',' << fmt(r.error.rotation_deg) << ',' << fmt(r.error.translation_m) << ','
        << fmt(r.runtime_s) << '\n';
}

void write_csv(std::ostream& out, const std::vector<RegistrationSummary>& rows) {
  out << "range,method,runs,failures,mean_abs,rotation_deg,translation_m\n";
  for (const auto& r : rows)
    out << range_label(r.range) << ',' << to_string(r.method) << ',' << r.runs << ',' << r.failures << ','
        << fmt(r.mean_abs) << ',' << fmt(r.rotation_deg) << ',' << fmt(r.translation_m) << '\n';
}

std::string_view to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::Noise: return "noise";
    case SweepKind::Hole: return "hole";
    case SweepKind::Sampling: return "sampling";
  }
  return "unknown";
}

std::optional<SweepKind> parse_sweep_kind(std::string_view name) {
  for (SweepKind k : kAllSweeps)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

const std::vector<double>& MetricBenchmarkSpec::values(SweepKind kind) const {
  switch (kind) {
    case SweepKind::Noise: return noise_values;
    case SweepKind::Hole: return hole_values;
    case SweepKind::Sampling: return sampling_values;
  }
  throw Error(ErrorCode::ConfigError, "unknown sweep");
}

void MetricBenchmarkSpec::validate() const {
  if (shapes.empty()) throw Error(ErrorCode::ConfigError, "shapes: at least one shape required");
  if (metrics.empty()) throw Error(ErrorCode::ConfigError, "metrics: at least one metric required");
  if (sweeps.empty()) throw Error(ErrorCode::ConfigError, "sweeps: at least one sweep required");
  if (repetitions < 1) throw Error(ErrorCode::ConfigError, "reps: must be >= 1");
  if (samples < 2) throw Error(ErrorCode::ConfigError, "samples: must be >= 2");
  for (double v : noise_values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::ConfigError, "noise_values: must be finite and >= 0");
  for (double v : hole_values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::ConfigError, "hole_values: must be finite and >= 0");
  for (double v : sampling_values)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::ConfigError, "sampling_values: must lie in [0, 1]");
}

std::uint64_t metric_cell_seed(std::uint64_t master, ShapeKind shape, SweepKind sweep, double value,
                               std::size_t rep) {
  std::uint64_t s = derive_seed(master, static_cast<std::uint64_t>(shape));
  s = derive_seed(s, static_cast<std::uint64_t>(sweep));
  s = derive_seed(s, std::bit_cast<std::uint64_t>(value));
  return derive_seed(s, rep);
}

std::vector<MetricRow> run_metric_benchmark(const MetricBenchmarkSpec& spec) {
  spec.validate();
  std::vector<MetricRow> rows;
  for (ShapeKind shape : spec.shapes) {
    for (SweepKind sweep : spec.sweeps) {
      const auto& values = spec.values(sweep);
      for (std::size_t vi = 0; vi < values.size(); ++vi) {
        const std::size_t first = rows.size();
        for (MetricKind metric : spec.metrics) {
          MetricRow row;
          row.shape = shape;
          row.sweep = sweep;
          row.value = values[vi];
          row.metric = metric;
          rows.push_back(row);
        }
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
          PerturbationSpec ps;
          ps.seed = metric_cell_seed(spec.seed, shape, sweep, values[vi], rep);
          if (sweep == SweepKind::Noise) ps.noise_std = values[vi];
          if (sweep == SweepKind::Hole) ps.hole_radius = values[vi];
          if (sweep == SweepKind::Sampling) ps.sampling_factor = values[vi];
          std::optional<MetricPair> pair;
          std::string pair_error;
          try {
            pair = make_metric_pair(shape, ps, spec.samples, spec.segments);
          } catch (const Error& e) {
            pair_error = std::string(to_string(e.code()));
          }
          for (std::size_t m = 0; m < spec.metrics.size(); ++m) {
            MetricRow& row = rows[first + m];
            std::string failure = pair_error;
            if (pair) {
              try {
                const double est = measure(row.metric, pair->test, pair->reference, &pair->mesh, spec.options).scalar;
                if (!std::isfinite(est)) throw Error(ErrorCode::DegenerateOutput, "non-finite estimate");
                row.mean_estimate += est;
                row.mean_deviation += std::abs(est - pair->gt_distance);
                ++row.runs;
              } catch (const Error& e) {
                failure = std::string(to_string(e.code()));
              }
            }
            if (!failure.empty() && row.status == "ok") row.status = failure;
          }
        }
        for (std::size_t m = 0; m < spec.metrics.size(); ++m) {
          MetricRow& row = rows[first + m];
          if (row.runs == 0) {
            row.mean_estimate = row.mean_deviation = std::numeric_limits<double>::quiet_NaN();
            continue;
          }
          row.mean_estimate /= static_cast<double>(row.runs);
          row.mean_deviation /= static_cast<double>(row.runs);
          if (row.runs == spec.repetitions) row.status = "ok";
        }
      }
    }
  }
  return rows;
}

void write_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "shape,sweep,value,metric,runs,mean_estimate,mean_deviation,status\n";
  for (const auto& r : rows)
    out << to_string(r.shape) << ',' << to_string(r.sweep) << ',' << fmt(r.value) << ',' << to_string(r.metric) << ','
        << r.runs << ',' << fmt(r.mean_estimate) << ',' << fmt(r.mean_deviation) << ',' << r.status << '\n';
}

}  // namespace mvfuse
