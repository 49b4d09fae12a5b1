#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsdf_mcl/particles.hpp"
#include "tsdf_mcl/scene.hpp"
#include "tsdf_mcl/sensor_model.hpp"
#include "tsdf_mcl/tsdf_map.hpp"

namespace tsdf_mcl {

/// Component-major particle storage: index i of every lane is particle i.
struct ParticleSoA {
  Eigen::ArrayXd x, y, z, roll, pitch, yaw, weight;

  Eigen::Index size() const { return weight.size(); }
  Pose6D pose(Eigen::Index i) const {
    // Direct field assignment keeps the stored angles bit-exact.
    Pose6D p;
    p.x = x[i], p.y = y[i], p.z = z[i];
    p.roll = roll[i], p.pitch = pitch[i], p.yaw = yaw[i];
    return p;
  }
};

ParticleSoA pack(std::span<const Particle> particles);
std::vector<Particle> unpack(const ParticleSoA& soa);

/// Splits [0, count) into `lanes` contiguous ranges and runs fn(begin, end, lane)
/// for each, lane 0 on the calling thread. Returns after all lanes finish.
void run_lanes(Eigen::Index count, int lanes,
               const std::function<void(Eigen::Index, Eigen::Index, int)>& fn);

/// Per-particle log-likelihood sums, each lane writing a disjoint index range.
Eigen::ArrayXd evaluate_log_likelihoods(const ParticleSoA& soa, const PointCloud& scan,
                                        const TsdfMap& map, const SensorModelParams& params,
                                        int lanes, std::uint64_t* lookups = nullptr);

/// Updated (unnormalized) weights: weight_i * exp(log_i - max_j log_j).
/// Bit-identical for every lane count.
Eigen::ArrayXd evaluate_particles_parallel(const ParticleSoA& soa, const PointCloud& scan,
                                           const TsdfMap& map, const SensorModelParams& params,
                                           int lanes, std::uint64_t* lookups = nullptr);

/// Values padded with zeros up to the next power of two.
class ReductionBuffer {
 public:
  ReductionBuffer() = default;
  explicit ReductionBuffer(std::span<const double> values);
  explicit ReductionBuffer(const Eigen::ArrayXd& values)
      : ReductionBuffer(std::span<const double>(values.data(), static_cast<std::size_t>(values.size()))) {}

  std::size_t size() const { return values_.size(); }
  std::size_t logical_size() const { return logical_size_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
  std::size_t logical_size_ = 0;
};

struct TreeReduction {
  double sum = 0.0;
  int iterations = 0;
};

/// Pairwise tree reduction: iteration k adds element i + 2^k into element i
/// for every i that is a multiple of 2^(k+1), halving the active elements each
/// time until element 0 holds the total. Lanes split each iteration's pairs and
/// meet at a barrier before the next one; the addition order, and so the
/// result, does not depend on the lane count.
TreeReduction tree_reduce(ReductionBuffer buffer, int lanes = 1);

inline double tree_reduce_sum(std::span<const double> values, int lanes = 1) {
  return tree_reduce(ReductionBuffer(values), lanes).sum;
}

struct WeightedPoseSums {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d quaternion = Eigen::Vector4d::Zero();  ///< (w, x, y, z)
  double total_weight = 0.0;
};

/// Tree-reduced sums of weight * position and weight * quaternion, with each
/// quaternion flipped into the hemisphere of the heaviest particle (lowest
/// index on ties). Throws DegenerateFilterError when the total weight is 0.
WeightedPoseSums tree_reduce_weighted_pose(const ParticleSoA& soa, int lanes = 1);

/// Divides the sums by the total weight and renormalizes the quaternion.
Pose6D weighted_mean_pose(const WeightedPoseSums& sums);

struct BenchmarkSetup {
  std::size_t n_particles = 10000;
  int lanes = 1;
  int trials = 5;
  Pose6D center;
  std::array<double, 6> sigmas{0.5, 0.5, 0.1, 0.05, 0.05, 0.3};
  std::uint64_t seed = 1;
};

struct BenchmarkRecord {
  std::size_t n_particles = 0;
  int lanes = 1;
  std::size_t scan_points = 0;
  int stride = 1;
  double median_ms = 0.0;
  int trials = 0;
  std::uint64_t lookups = 0;  ///< map reads per trial

  std::string to_json() const;
};

/// Times evaluate + weight-sum + weighted-pose reduction on a normally
/// distributed particle cloud; reports the median over trials.
BenchmarkRecord benchmark_sensor_update(const BenchmarkSetup& setup, const PointCloud& scan,
                                        const TsdfMap& map, const SensorModelParams& params);

/// Physical cores from /proc/cpuinfo, falling back to hardware_concurrency.
int physical_core_count();

}  // namespace tsdf_mcl
