#pragma once

#include <array>
#include <cstdint>
#include <numbers>

#include "tsdf_mcl/geometry.hpp"
#include "tsdf_mcl/particles.hpp"
#include "tsdf_mcl/scene.hpp"
#include "tsdf_mcl/sensor_model.hpp"
#include "tsdf_mcl/tsdf_map.hpp"

namespace tsdf_mcl {

struct MotionNoiseParams {
  double sigma_linear = 0.0;   ///< meters per update, per axis
  double sigma_angular = 0.0;  ///< radians per update, per axis
};

/// Relative pose increment expressed in the robot's previous frame.
struct OdometryDelta {
  Pose6D increment;

  static OdometryDelta between(const Pose6D& from, const Pose6D& to) {
    return {compose(inverse(from), to)};
  }
};

enum class OrientationMode {
  kBounded,  ///< yaw uniform, roll/pitch uniform within +-bound
  kFull,     ///< uniformly random rotation
};

struct GlobalInitOptions {
  OrientationMode orientation = OrientationMode::kBounded;
  double roll_pitch_bound = 15.0 * std::numbers::pi / 180.0;
};

/// Positions uniform in free space, weights 1/count.
ParticleSet initialize_global(const Scene& scene, std::size_t count, const GlobalInitOptions& options,
                              std::uint64_t seed);

/// Independent Gaussian perturbation of each pose component;
/// sigmas ordered (x, y, z, roll, pitch, yaw).
ParticleSet initialize_local(const Pose6D& center, const std::array<double, 6>& sigmas,
                             std::size_t count, std::uint64_t seed);

/// state <- compose(state, delta + noise). Particle i draws its noise from
/// stream (seed, i), so results do not depend on evaluation order.
ParticleSet motion_update(ParticleSet set, const OdometryDelta& delta, const MotionNoiseParams& noise,
                          std::uint64_t seed);

/// Reweights by the endpoint model; the result is unnormalized.
ParticleSet sensor_update(ParticleSet set, const PointCloud& scan, const TsdfMap& map,
                          const SensorModelParams& params, int lanes = 1,
                          std::uint64_t* lookups = nullptr);

ParticleSet normalize(ParticleSet set);

/// Systematic (low-variance) resampling; requires a normalized set.
ParticleSet resample(const ParticleSet& set, std::uint64_t seed);

/// 1 / sum(w^2) of a normalized set.
double effective_sample_size(const ParticleSet& set);

enum class EstimateMode { kMean, kMax };

Pose6D estimate_pose(const ParticleSet& set, EstimateMode mode, int lanes = 1);

}  // namespace tsdf_mcl
