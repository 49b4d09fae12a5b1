#include "tsdf_mcl/experiment.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "tsdf_mcl/random.hpp"

namespace tsdf_mcl {

namespace {

namespace fs = std::filesystem;

constexpr double kDegree = std::numbers::pi / 180.0;

// Seed purposes, so each consumer of the experiment seed gets its own streams.
enum class SeedUse : std::uint64_t { kInit = 1, kMotion, kOdometry, kScan, kResample };

std::uint64_t derive_seed(std::uint64_t seed, SeedUse use, std::uint64_t iteration) {
  return mix_seed(mix_seed(seed + static_cast<std::uint64_t>(use) * 0xD1B54A32D192ED03ull) + iteration);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  if (!(in >> out) || !(in >> std::ws).eof()) throw ConfigError(key, "cannot parse `" + value + "`");
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  if (out.empty()) throw ConfigError(key, "expected a comma-separated list");
  return out;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& base_dir) {
  ExperimentConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](auto& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) {
      field = parse_number<std::remove_reference_t<decltype(field)>>(k, v);
    };
  };
  auto path = [&base_dir](std::string& field) -> Setter {
    return [&field, &base_dir](const std::string&, const std::string& v) { field = resolve(base_dir, v); };
  };
  auto choice = [](auto& field, auto options) -> Setter {
    return [&field, options](const std::string& k, const std::string& v) {
      const auto it = options.find(v);
      if (it == options.end()) throw ConfigError(k, "unknown option `" + v + "`");
      field = it->second;
    };
  };

  const std::map<std::string, Setter> setters{
      {"scene_file", path(c.scene_file)},
      {"trajectory_file", path(c.trajectory_file)},
      {"output_dir", path(c.output_dir)},
      {"map_resolution_m", num(c.map_resolution_m)},
      {"map_truncation_m", num(c.map_truncation_m)},
      {"map_block_size", num(c.map_block_size)},
      {"scan_rings", num(c.scan_rings)},
      {"scan_elevation_min_deg", num(c.scan_elevation_min_deg)},
      {"scan_elevation_max_deg", num(c.scan_elevation_max_deg)},
      {"scan_azimuths", num(c.scan_azimuths)},
      {"scan_max_range_m", num(c.scan_max_range_m)},
      {"scan_noise_m", num(c.scan_noise_m)},
      {"particles", num(c.particles)},
      {"init_mode", choice(c.init_mode, std::map<std::string, InitMode>{
                                            {"global", InitMode::kGlobal}, {"local", InitMode::kLocal}})},
      {"init_sigma_x_m", num(c.init_sigmas[0])},
      {"init_sigma_y_m", num(c.init_sigmas[1])},
      {"init_sigma_z_m", num(c.init_sigmas[2])},
      {"init_sigma_roll_rad", num(c.init_sigmas[3])},
      {"init_sigma_pitch_rad", num(c.init_sigmas[4])},
      {"init_sigma_yaw_rad", num(c.init_sigmas[5])},
      {"init_orientation", choice(c.init_orientation,
                                  std::map<std::string, OrientationMode>{
                                      {"bounded", OrientationMode::kBounded}, {"full", OrientationMode::kFull}})},
      {"init_roll_pitch_bound_rad", num(c.init_roll_pitch_bound_rad)},
      {"motion_sigma_linear_m", num(c.motion_sigma_linear_m)},
      {"motion_sigma_angular_rad", num(c.motion_sigma_angular_rad)},
      {"odometry_noise_linear_m", num(c.odometry_noise_linear_m)},
      {"odometry_noise_angular_rad", num(c.odometry_noise_angular_rad)},
      {"sensor_sigma_m", num(c.sensor_sigma_m)},
      {"stride", num(c.stride)},
      {"lut_resolution_m", num(c.lut_resolution_m)},
      {"map_lookup", choice(c.map_lookup, std::map<std::string, MapLookup>{
                                              {"nearest", MapLookup::kNearest},
                                              {"interpolated", MapLookup::kInterpolated}})},
      {"estimate_mode", choice(c.estimate_mode, std::map<std::string, EstimateMode>{
                                                    {"mean", EstimateMode::kMean}, {"max", EstimateMode::kMax}})},
      {"resample_ess_fraction", num(c.resample_ess_fraction)},
      {"lanes", num(c.lanes)},
      {"seed", num(c.seed)},
      {"iterations", num(c.iterations)},
      {"convergence_threshold_m", num(c.convergence_threshold_m)},
      {"convergence_window", num(c.convergence_window)},
      {"bench_particles", [&c](const std::string& k, const std::string& v) {
         c.bench_particles = parse_list<std::size_t>(k, v);
       }},
      {"bench_lanes", [&c](const std::string& k, const std::string& v) { c.bench_lanes = parse_list<int>(k, v); }},
      {"bench_trials", num(c.bench_trials)},
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    it->second(key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  return parse(in, fs::path(path).parent_path().string());
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(field, what);
  };
  require(!scene_file.empty(), "scene_file", "is required");
  require(fs::exists(scene_file), "scene_file", "does not exist");
  require(!trajectory_file.empty(), "trajectory_file", "is required");
  require(fs::exists(trajectory_file), "trajectory_file", "does not exist");
  require(map_resolution_m > 0.0, "map_resolution_m", "must be positive");
  require(map_truncation_m >= map_resolution_m, "map_truncation_m", "must be >= map_resolution_m");
  require(map_block_size >= 1 && std::has_single_bit(static_cast<unsigned>(map_block_size)), "map_block_size",
          "must be a power of two");
  require(scan_rings >= 1, "scan_rings", "must be >= 1");
  require(scan_rings == 1 || scan_elevation_max_deg > scan_elevation_min_deg, "scan_elevation_max_deg",
          "must exceed scan_elevation_min_deg");
  require(scan_azimuths >= 1, "scan_azimuths", "must be >= 1");
  require(scan_max_range_m > 0.0, "scan_max_range_m", "must be positive");
  require(scan_noise_m >= 0.0, "scan_noise_m", "must be non-negative");
  require(particles >= 1, "particles", "must be >= 1");
  for (const double s : init_sigmas) require(s >= 0.0, "init_sigma", "sigmas must be non-negative");
  require(init_roll_pitch_bound_rad >= 0.0, "init_roll_pitch_bound_rad", "must be non-negative");
  require(motion_sigma_linear_m >= 0.0, "motion_sigma_linear_m", "must be non-negative");
  require(motion_sigma_angular_rad >= 0.0, "motion_sigma_angular_rad", "must be non-negative");
  require(odometry_noise_linear_m >= 0.0, "odometry_noise_linear_m", "must be non-negative");
  require(odometry_noise_angular_rad >= 0.0, "odometry_noise_angular_rad", "must be non-negative");
  require(sensor_sigma_m > 0.0, "sensor_sigma_m", "must be positive");
  require(stride >= 1, "stride", "must be >= 1");
  require(lut_resolution_m >= 0.0, "lut_resolution_m", "must be non-negative");
  require(resample_ess_fraction >= 0.0 && resample_ess_fraction <= 1.0, "resample_ess_fraction",
          "must be in [0, 1]");
  require(lanes >= 1, "lanes", "must be >= 1");
  require(iterations >= 0, "iterations", "must be >= 0");
  require(convergence_threshold_m >= 0.0, "convergence_threshold_m", "must be non-negative");
  require(convergence_window >= 1, "convergence_window", "must be >= 1");
  require(!bench_particles.empty(), "bench_particles", "must be non-empty");
  for (const auto n : bench_particles) require(n >= 1, "bench_particles", "entries must be >= 1");
  require(!bench_lanes.empty(), "bench_lanes", "must be non-empty");
  for (const int l : bench_lanes) require(l >= 1, "bench_lanes", "entries must be >= 1");
  require(bench_trials >= 1, "bench_trials", "must be >= 1");
}

ScanPattern ExperimentConfig::scan_pattern() const {
  return ScanPattern::uniform(scan_rings, scan_elevation_min_deg * kDegree, scan_elevation_max_deg * kDegree,
                              scan_azimuths, scan_max_range_m);
}

SensorModelParams ExperimentConfig::sensor_params() const {
  SensorModelParams params;
  params.sigma = sensor_sigma_m;
  params.subsample_stride = stride;
  params.lookup = map_lookup;
  if (lut_resolution_m > 0.0) params.with_lut(map_truncation_m, lut_resolution_m);
  return params;
}

ExperimentWorld ExperimentWorld::build(const ExperimentConfig& config) {
  Scene scene = Scene::load(config.scene_file);
  TsdfMap map = build_tsdf(scene, config.map_resolution_m, config.map_truncation_m, config.map_block_size);
  Trajectory trajectory = load_trajectory(config.trajectory_file);
  if (trajectory.empty()) throw ConfigError("trajectory_file", "contains no poses");
  return {std::move(scene), std::move(map), std::move(trajectory)};
}

bool is_converged(const std::vector<MetricsRecord>& metrics, double threshold, int window) {
  if (window < 1 || metrics.size() < static_cast<std::size_t>(window)) return false;
  return std::all_of(metrics.end() - window, metrics.end(),
                     [threshold](const MetricsRecord& r) { return r.position_error() < threshold; });
}

bool has_early_rise(const std::vector<MetricsRecord>& metrics, int early_window, double min_rise) {
  const auto n = std::min<std::size_t>(metrics.size(), static_cast<std::size_t>(std::max(early_window, 0)));
  for (std::size_t k = 1; k < n; ++k) {
    const Eigen::Vector3d growth = metrics[k].translation_error - metrics[k - 1].translation_error;
    if (growth.maxCoeff() > min_rise) return true;
  }
  return false;
}

bool has_rise_then_converge_shape(const std::vector<MetricsRecord>& metrics, double threshold,
                                  int window, int early_window) {
  return has_early_rise(metrics, early_window, threshold / 2) && is_converged(metrics, threshold, window);
}

LocalizationReport run_localization(const ExperimentConfig& config, const MetricsSink& sink) {
  return run_localization(config, ExperimentWorld::build(config), sink);
}

LocalizationReport run_localization(const ExperimentConfig& config, const ExperimentWorld& world,
                                    const MetricsSink& sink) {
  const ScanPattern pattern = config.scan_pattern();
  const SensorModelParams params = config.sensor_params();
  const MotionNoiseParams motion_noise{config.motion_sigma_linear_m, config.motion_sigma_angular_rad};
  const auto& trajectory = world.trajectory;
  const int iterations = config.iterations > 0 ? config.iterations : static_cast<int>(trajectory.size());
  auto truth_at = [&](int k) {
    return trajectory[std::min<std::size_t>(static_cast<std::size_t>(k), trajectory.size() - 1)].pose;
  };

  ParticleSet set =
      config.init_mode == InitMode::kGlobal
          ? initialize_global(world.scene, config.particles,
                              {config.init_orientation, config.init_roll_pitch_bound_rad},
                              derive_seed(config.seed, SeedUse::kInit, 0))
          : initialize_local(truth_at(0), config.init_sigmas, config.particles,
                             derive_seed(config.seed, SeedUse::kInit, 0));

  LocalizationReport report;
  for (int k = 0; k < iterations; ++k) {
    const Pose6D truth = truth_at(k);
    const auto step = static_cast<std::uint64_t>(k);

    if (k > 0) {
      Pose6D odom = OdometryDelta::between(truth_at(k - 1), truth).increment;
      if (config.odometry_noise_linear_m > 0.0 || config.odometry_noise_angular_rad > 0.0) {
        std::mt19937_64 rng(derive_seed(config.seed, SeedUse::kOdometry, step));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double sl = config.odometry_noise_linear_m, sa = config.odometry_noise_angular_rad;
        const double nx = sl * gauss(rng), ny = sl * gauss(rng), nz = sl * gauss(rng);
        const double nr = sa * gauss(rng), np = sa * gauss(rng), nyaw = sa * gauss(rng);
        odom = Pose6D(odom.x + nx, odom.y + ny, odom.z + nz, odom.roll + nr, odom.pitch + np, odom.yaw + nyaw);
      }
      set = motion_update(std::move(set), {odom}, motion_noise, derive_seed(config.seed, SeedUse::kMotion, step));
    }

    const PointCloud scan =
        simulate_scan(world.scene, truth, pattern, config.scan_noise_m, derive_seed(config.seed, SeedUse::kScan, step));

    MetricsRecord record;
    record.iteration = k;
    try {
      const auto start = std::chrono::steady_clock::now();
      set = sensor_update(std::move(set), scan, world.map, params, config.lanes);
      record.sensor_update_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      set = normalize(std::move(set));
    } catch (const DegenerateFilterError&) {
      report.degenerate_iteration = k;
      return report;
    }

    record.effective_sample_size = effective_sample_size(set);
    const Pose6D estimate = estimate_pose(set, config.estimate_mode, config.lanes);
    record.translation_error = (estimate.position() - truth.position()).cwiseAbs();
    record.rotation_error = rotation_distance(estimate, truth);
    report.final_estimate = estimate;
    report.metrics.push_back(record);
    if (sink) sink(record);

    const bool gate = config.resample_ess_fraction > 0.0 &&
                      record.effective_sample_size >= config.resample_ess_fraction * static_cast<double>(set.size());
    if (!gate) set = resample(set, derive_seed(config.seed, SeedUse::kResample, step));
  }
  report.converged = is_converged(report.metrics, config.convergence_threshold(), config.convergence_window);
  return report;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

ScalingReport run_scaling_benchmark(const ExperimentConfig& config,
                                    const std::function<void(const BenchmarkRecord&)>& sink) {
  const ExperimentWorld world = ExperimentWorld::build(config);
  const Pose6D center = world.trajectory.front().pose;
  const PointCloud scan = simulate_scan(world.scene, center, config.scan_pattern(), config.scan_noise_m,
                                        derive_seed(config.seed, SeedUse::kScan, 0));
  const SensorModelParams params = config.sensor_params();

  ScalingReport report;
  std::map<std::pair<int, std::size_t>, double> medians;
  for (const int lanes : config.bench_lanes) {
    for (const std::size_t n : config.bench_particles) {
      BenchmarkSetup setup;
      setup.n_particles = n;
      setup.lanes = lanes;
      setup.trials = config.bench_trials;
      setup.center = center;
      setup.sigmas = config.init_sigmas;
      setup.seed = derive_seed(config.seed, SeedUse::kInit, n);
      const BenchmarkRecord record = benchmark_sensor_update(setup, scan, world.map, params);
      medians[{lanes, n}] = record.median_ms;
      report.records.push_back(record);
      if (sink) sink(record);
    }
  }

  if (config.bench_particles.size() >= 2) {
    std::vector<double> xs, ys;
    for (const std::size_t n : config.bench_particles) {
      xs.push_back(static_cast<double>(n));
      ys.push_back(medians[{config.bench_lanes.front(), n}]);
    }
    report.fit = fit_line(xs, ys);
  }
  if (config.bench_lanes.size() >= 2) {
    for (const std::size_t n : config.bench_particles) {
      const double fast = medians[{config.bench_lanes.back(), n}];
      report.speedups.emplace_back(n, fast > 0.0 ? medians[{config.bench_lanes.front(), n}] / fast : 0.0);
    }
  }
  return report;
}

void write_translation_error_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics) {
  out << "iteration,ex,ey,ez\n" << std::setprecision(6);
  for (const auto& r : metrics) {
    out << r.iteration << ',' << r.translation_error.x() << ',' << r.translation_error.y() << ','
        << r.translation_error.z() << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics) {
  out << "iteration,ex,ey,ez,rotation_error,ess\n" << std::setprecision(6);
  for (const auto& r : metrics) {
    out << r.iteration << ',' << r.translation_error.x() << ',' << r.translation_error.y() << ','
        << r.translation_error.z() << ',' << r.rotation_error << ',' << r.effective_sample_size << '\n';
  }
}

void write_timing_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics) {
  out << "iteration,sensor_update_ms\n" << std::setprecision(6);
  for (const auto& r : metrics) out << r.iteration << ',' << r.sensor_update_ms << '\n';
}

void write_runtime_scaling_csv(std::ostream& out, const std::vector<BenchmarkRecord>& records) {
  out << "n,median_ms\n" << std::setprecision(6);
  for (const auto& r : records) out << r.n_particles << ',' << r.median_ms << '\n';
}

void emit_plots_csv(const std::string& directory, const std::vector<MetricsRecord>& metrics,
                    const std::vector<BenchmarkRecord>& benchmarks) {
  fs::create_directories(directory);
  std::ofstream translation(fs::path(directory) / "translation_error.csv");
  write_translation_error_csv(translation, metrics);
  std::ofstream runtime(fs::path(directory) / "runtime_scaling.csv");
  write_runtime_scaling_csv(runtime, benchmarks);
  if (!translation || !runtime) throw std::runtime_error("failed writing CSV files to " + directory);
}

std::vector<MetricsRecord> read_translation_error_csv(std::istream& in) {
  std::vector<MetricsRecord> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    MetricsRecord r;
    if (!(fields >> r.iteration >> r.translation_error.x() >> r.translation_error.y() >>
          r.translation_error.z())) {
      throw std::runtime_error("malformed translation_error.csv row: " + line);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace tsdf_mcl
