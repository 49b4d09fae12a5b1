// Experiment runner: localize, bench, build-map.
//
// Exit codes: 0 success, 1 configuration error, 2 degenerate filter.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "tsdf_mcl/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDegenerate = 2;

tsdf_mcl::ExperimentConfig load_config(const std::string& path) {
  auto config = tsdf_mcl::ExperimentConfig::load(path);
  if (const char* env = std::getenv("MCL_LANES")) {
    try {
      const int lanes = std::stoi(env);
      if (lanes < 1) throw std::invalid_argument("non-positive");
      config.lanes = lanes;
      config.bench_lanes = {lanes};
    } catch (const std::exception&) {
      throw tsdf_mcl::ConfigError("MCL_LANES", std::string("invalid lane count `") + env + "`");
    }
  }
  return config;
}

int run_localize(const std::string& config_path) {
  const auto config = load_config(config_path);
  std::cout << "iteration ex ey ez rot_err ms ess\n" << std::setprecision(4);
  const auto report = tsdf_mcl::run_localization(config, [](const tsdf_mcl::MetricsRecord& r) {
    std::cout << r.iteration << ' ' << r.translation_error.x() << ' ' << r.translation_error.y() << ' '
              << r.translation_error.z() << ' ' << r.rotation_error << ' ' << r.sensor_update_ms << ' '
              << r.effective_sample_size << '\n';
  });

  std::filesystem::create_directories(config.output_dir);
  tsdf_mcl::emit_plots_csv(config.output_dir, report.metrics, {});
  std::ofstream metrics(std::filesystem::path(config.output_dir) / "metrics.csv");
  tsdf_mcl::write_metrics_csv(metrics, report.metrics);
  std::ofstream timing(std::filesystem::path(config.output_dir) / "timing.csv");
  tsdf_mcl::write_timing_csv(timing, report.metrics);

  if (report.degenerate_iteration) {
    std::cerr << "degenerate filter at iteration " << *report.degenerate_iteration
              << ": total particle weight vanished\n";
    return kExitDegenerate;
  }
  const auto& e = report.final_estimate;
  std::cout << "final estimate " << e.x << ' ' << e.y << ' ' << e.z << ' ' << e.roll << ' ' << e.pitch << ' '
            << e.yaw << '\n'
            << (report.converged ? "converged" : "not converged") << " (threshold "
            << config.convergence_threshold() << " m over last " << config.convergence_window
            << " iterations)\n";
  return kExitOk;
}

int run_bench(const std::string& config_path) {
  const auto config = load_config(config_path);
  std::filesystem::create_directories(config.output_dir);
  std::ofstream jsonl(std::filesystem::path(config.output_dir) / "bench.jsonl");
  const auto report = tsdf_mcl::run_scaling_benchmark(config, [&](const tsdf_mcl::BenchmarkRecord& r) {
    std::cout << r.to_json() << '\n';
    jsonl << r.to_json() << '\n';
  });
  tsdf_mcl::emit_plots_csv(config.output_dir, {}, report.records);
  if (config.bench_particles.size() >= 2) {
    std::cerr << "linear fit: slope " << report.fit.slope << " ms/particle, R^2 " << report.fit.r_squared
              << '\n';
  }
  for (const auto& [n, speedup] : report.speedups) std::cerr << "speedup at n=" << n << ": " << speedup << '\n';
  return kExitOk;
}

int run_build_map(const std::string& scene_path, const std::string& out_path, double resolution,
                  double truncation, int block_size) {
  if (!(resolution > 0.0)) throw tsdf_mcl::ConfigError("--res", "must be positive");
  if (!(truncation >= resolution)) throw tsdf_mcl::ConfigError("--trunc", "must be >= --res");
  const auto scene = tsdf_mcl::Scene::load(scene_path);
  const auto map = tsdf_mcl::build_tsdf(scene, resolution, truncation, block_size);
  map.save(out_path);
  std::cout << "wrote " << out_path << ": " << map.block_count() << " blocks\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"6-DoF Monte Carlo localization in TSDF maps"};
  app.require_subcommand(1);

  std::string config_path;
  auto* localize = app.add_subcommand("localize", "Run one localization experiment");
  localize->add_option("--config", config_path, "Experiment config file")->required();
  auto* bench = app.add_subcommand("bench", "Run the sensor-update scaling benchmark");
  bench->add_option("--config", config_path, "Experiment config file")->required();

  std::string scene_path, out_path;
  double resolution = 0.06, truncation = 0.3;
  int block_size = tsdf_mcl::TsdfMap::kDefaultBlockSize;
  auto* build_map = app.add_subcommand("build-map", "Build a TSDF map from a scene file");
  build_map->add_option("--scene", scene_path, "Scene file")->required();
  build_map->add_option("--out", out_path, "Output map file")->required();
  build_map->add_option("--res", resolution, "Fine resolution in meters")->required();
  build_map->add_option("--trunc", truncation, "Truncation distance in meters")->required();
  build_map->add_option("--block-size", block_size, "Cells per block edge (power of two)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*localize) return run_localize(config_path);
    if (*bench) return run_bench(config_path);
    return run_build_map(scene_path, out_path, resolution, truncation, block_size);
  } catch (const tsdf_mcl::DegenerateFilterError& e) {
    std::cerr << "degenerate filter: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
