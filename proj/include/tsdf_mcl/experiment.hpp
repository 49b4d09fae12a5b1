#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsdf_mcl/mcl.hpp"
#include "tsdf_mcl/parallel_engine.hpp"
#include "tsdf_mcl/scene.hpp"

namespace tsdf_mcl {

/// Configuration problem tied to a single key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class InitMode { kGlobal, kLocal };

/// Flat `key = value` experiment description. Key names carry their units.
struct ExperimentConfig {
  std::string scene_file;
  std::string trajectory_file;
  std::string output_dir = ".";

  double map_resolution_m = 0.06;
  double map_truncation_m = 0.3;
  int map_block_size = 16;

  int scan_rings = 16;
  double scan_elevation_min_deg = -15.0;
  double scan_elevation_max_deg = 15.0;
  int scan_azimuths = 900;
  double scan_max_range_m = 100.0;
  double scan_noise_m = 0.0;

  std::size_t particles = 2000;
  InitMode init_mode = InitMode::kLocal;
  std::array<double, 6> init_sigmas{0.1, 0.1, 0.05, 0.02, 0.02, 0.05};
  OrientationMode init_orientation = OrientationMode::kBounded;
  double init_roll_pitch_bound_rad = 15.0 * std::numbers::pi / 180.0;

  double motion_sigma_linear_m = 0.02;
  double motion_sigma_angular_rad = 0.01;
  double odometry_noise_linear_m = 0.0;
  double odometry_noise_angular_rad = 0.0;

  double sensor_sigma_m = 0.1;
  int stride = 4;
  double lut_resolution_m = 0.0;  ///< 0 evaluates the exponential per point
  MapLookup map_lookup = MapLookup::kNearest;
  EstimateMode estimate_mode = EstimateMode::kMean;
  double resample_ess_fraction = 0.0;  ///< 0 resamples every iteration

  int lanes = 1;
  std::uint64_t seed = 1;
  int iterations = 0;  ///< 0 walks the whole trajectory; extra iterations hold the last pose

  double convergence_threshold_m = 0.0;  ///< 0 means 2 x map_resolution_m
  int convergence_window = 5;

  std::vector<std::size_t> bench_particles{10000, 20000, 40000, 80000};
  std::vector<int> bench_lanes{1};
  int bench_trials = 5;

  /// Paths in the file are resolved against the file's directory.
  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(std::istream& in, const std::string& base_dir = ".");
  void validate() const;

  ScanPattern scan_pattern() const;
  SensorModelParams sensor_params() const;
  double convergence_threshold() const {
    return convergence_threshold_m > 0.0 ? convergence_threshold_m : 2.0 * map_resolution_m;
  }
};

struct MetricsRecord {
  int iteration = 0;
  Eigen::Vector3d translation_error = Eigen::Vector3d::Zero();  ///< |dx|, |dy|, |dz|
  double rotation_error = 0.0;                                   ///< geodesic angle
  double sensor_update_ms = 0.0;
  double effective_sample_size = 0.0;

  double position_error() const { return translation_error.norm(); }
};

struct LocalizationReport {
  std::vector<MetricsRecord> metrics;
  bool converged = false;
  std::optional<int> degenerate_iteration;
  Pose6D final_estimate;
};

/// True when the last `window` records all have position error below threshold.
bool is_converged(const std::vector<MetricsRecord>& metrics, double threshold, int window);

/// True when some axis error grows by more than `min_rise` from one record to
/// the next within the first `early_window` records.
bool has_early_rise(const std::vector<MetricsRecord>& metrics, int early_window, double min_rise);

/// Early per-axis rise (by more than half the threshold) followed by convergence.
bool has_rise_then_converge_shape(const std::vector<MetricsRecord>& metrics, double threshold,
                                  int window, int early_window);

using MetricsSink = std::function<void(const MetricsRecord&)>;

LocalizationReport run_localization(const ExperimentConfig& config, const MetricsSink& sink = {});

/// Shared inputs built once per experiment.
struct ExperimentWorld {
  Scene scene;
  TsdfMap map;
  Trajectory trajectory;

  static ExperimentWorld build(const ExperimentConfig& config);
};

LocalizationReport run_localization(const ExperimentConfig& config, const ExperimentWorld& world,
                                    const MetricsSink& sink = {});

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

struct ScalingReport {
  std::vector<BenchmarkRecord> records;
  LinearFit fit;  ///< median_ms vs n_particles at the first lanes value
  /// (n_particles, median at first lanes / median at last lanes) when >1 lanes values.
  std::vector<std::pair<std::size_t, double>> speedups;
};

ScalingReport run_scaling_benchmark(const ExperimentConfig& config,
                                    const std::function<void(const BenchmarkRecord&)>& sink = {});

void write_translation_error_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics);
/// Deterministic columns only; wall times go to write_timing_csv.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics);
void write_timing_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics);
void write_runtime_scaling_csv(std::ostream& out, const std::vector<BenchmarkRecord>& records);

/// Writes translation_error.csv and runtime_scaling.csv into `directory`.
void emit_plots_csv(const std::string& directory, const std::vector<MetricsRecord>& metrics,
                    const std::vector<BenchmarkRecord>& benchmarks);

/// Parses translation_error.csv rows back into (iteration, ex, ey, ez).
std::vector<MetricsRecord> read_translation_error_csv(std::istream& in);

}  // namespace tsdf_mcl
