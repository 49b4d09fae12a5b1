#pragma once

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "tsdf_mcl/geometry.hpp"
#include "tsdf_mcl/tsdf_map.hpp"

namespace tsdf_mcl {

struct Box {
  Eigen::Vector3d center;
  Eigen::Vector3d half_extents;

  /// Exact signed distance; negative inside.
  double signed_distance(const Eigen::Vector3d& p) const;

  /// Slab-method entry/exit parameters along origin + t*dir, or nullopt if the line misses.
  std::optional<std::pair<double, double>> slab_interval(const Eigen::Vector3d& origin,
                                                         const Eigen::Vector3d& dir) const;

  Eigen::AlignedBox3d aabb() const { return {center - half_extents, center + half_extents}; }
};

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Union of axis-aligned boxes inside a world extent.
class Scene {
 public:
  Scene(std::vector<Box> solids, const Eigen::AlignedBox3d& bounds);

  const std::vector<Box>& solids() const { return solids_; }
  const Eigen::AlignedBox3d& bounds() const { return bounds_; }

  /// Text form: `box cx cy cz hx hy hz` per solid, one `bounds xmin ymin zmin xmax ymax zmax` line.
  static Scene parse(std::istream& in);
  static Scene load(const std::string& path);
  void write(std::ostream& out) const;

 private:
  std::vector<Box> solids_;
  Eigen::AlignedBox3d bounds_;
};

double scene_sdf(const Scene& scene, const Eigen::Vector3d& p);

/// Distance to the first solid surface along a unit direction, or nullopt past max_range.
std::optional<double> ray_cast(const Scene& scene, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& dir, double max_range);

/// Samples clamp(scene_sdf) at every cell center within truncation of a surface.
TsdfMap build_tsdf(const Scene& scene, double fine_resolution, double truncation,
                   int block_size = TsdfMap::kDefaultBlockSize);

struct ScanPattern {
  std::vector<double> ring_elevations;  ///< radians, strictly increasing
  int azimuth_count = 900;
  double max_range = 100.0;

  /// 16 rings at -15..+15 deg in 2 deg steps, 0.4 deg azimuth spacing, 100 m range.
  static ScanPattern vlp16();
  /// Evenly spaced rings between min and max elevation (inclusive).
  static ScanPattern uniform(int rings, double min_elevation, double max_elevation,
                             int azimuth_count, double max_range);

  std::size_t ray_count() const { return ring_elevations.size() * static_cast<std::size_t>(azimuth_count); }
  void validate() const;
};

/// Sensor-frame points, one per column.
struct PointCloud {
  Eigen::Matrix3Xd points;

  std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
  bool empty() const { return points.cols() == 0; }

  static PointCloud read(std::istream& in);
  void write(std::ostream& out) const;
};

PointCloud simulate_scan(const Scene& scene, const Pose6D& sensor_pose, const ScanPattern& pattern,
                         double noise_sigma, std::uint64_t seed);

/// Rejection-sampled uniform points inside the bounds with positive scene SDF.
std::vector<Eigen::Vector3d> sample_free_space(const Scene& scene, std::size_t count,
                                               std::uint64_t seed);

}  // namespace tsdf_mcl
