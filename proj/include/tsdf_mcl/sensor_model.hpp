#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "tsdf_mcl/geometry.hpp"
#include "tsdf_mcl/scene.hpp"
#include "tsdf_mcl/tsdf_map.hpp"

namespace tsdf_mcl {

/// Gaussian endpoint likelihood of a scan point whose map distance is d.
inline double point_likelihood(double d, double sigma) {
  constexpr double inv_sqrt_two_pi = 0.39894228040143267794;
  return inv_sqrt_two_pi / sigma * std::exp(-0.5 * (d * d) / (sigma * sigma));
}

/// Precomputed endpoint likelihoods over distances in [-K*h, K*h] with
/// K = ceil(truncation / h), so the table always covers +-truncation.
/// Entries sit at d = k*h, which makes the table exactly symmetric about 0.
/// Queries interpolate linearly between the two neighboring entries and clamp
/// to the table edge.
class LikelihoodTable {
 public:
  LikelihoodTable(double sigma, double truncation, double resolution);

  double sigma() const { return sigma_; }
  double resolution() const { return resolution_; }
  double half_extent() const { return half_count_ * resolution_; }
  std::size_t size() const { return likelihood_.size(); }

  /// Entry k in [-K, K].
  double entry(int k) const { return likelihood_[static_cast<std::size_t>(k + half_count_)]; }

  double likelihood(double d) const { return interpolate(likelihood_, d); }
  double log_likelihood(double d) const { return interpolate(log_likelihood_, d); }

 private:
  double interpolate(const std::vector<double>& table, double d) const;

  double sigma_;
  double resolution_;
  int half_count_;
  std::vector<double> likelihood_;
  std::vector<double> log_likelihood_;
};

enum class MapLookup { kNearest, kInterpolated };

struct SensorModelParams {
  double sigma = 0.1;
  int subsample_stride = 4;
  double lut_resolution = 0.0;  ///< informational; the table below is authoritative
  std::shared_ptr<const LikelihoodTable> lut;  ///< null: evaluate the exponential per point
  MapLookup lookup = MapLookup::kNearest;

  /// Attaches a table covering the map's truncation band.
  SensorModelParams& with_lut(double truncation, double resolution);
  void validate(const TsdfMap& map) const;
};

/// Log of the product of endpoint likelihoods for one pose hypothesis.
/// Points are visited in scan order (every stride-th point), so the value is
/// a deterministic function of (pose, scan, map, params). `lookups` counts map reads.
double particle_log_likelihood(const Pose6D& pose, const PointCloud& scan, const TsdfMap& map,
                               const SensorModelParams& params, std::uint64_t* lookups = nullptr);

}  // namespace tsdf_mcl
