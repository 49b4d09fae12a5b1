#include "tsdf_mcl/mcl.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "tsdf_mcl/parallel_engine.hpp"
#include "tsdf_mcl/random.hpp"

namespace tsdf_mcl {

namespace {

// Stream-space offsets so different consumers of one seed never share a stream.
constexpr std::uint64_t kOrientationStreams = 1ull << 40;

bool is_zero_pose(const Pose6D& p) {
  return p.x == 0.0 && p.y == 0.0 && p.z == 0.0 && p.roll == 0.0 && p.pitch == 0.0 && p.yaw == 0.0;
}

Quaternion<double> uniform_rotation(std::mt19937_64& rng) {
  // Shoemake's subgroup algorithm.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u1 = unit(rng), u2 = unit(rng), u3 = unit(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double two_pi = 2.0 * std::numbers::pi;
  return Quaternion<double>(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2),
                            a * std::cos(two_pi * u2), b * std::sin(two_pi * u3));
}

}  // namespace

double ParticleSet::total_weight() const {
  double total = 0.0;
  for (const auto& p : particles) total += p.weight;
  return total;
}

void write_particles(std::ostream& out, const ParticleSet& set) {
  out << std::setprecision(17);
  for (const auto& p : set.particles) {
    const auto& s = p.state;
    out << s.x << ' ' << s.y << ' ' << s.z << ' ' << s.roll << ' ' << s.pitch << ' ' << s.yaw << ' '
        << p.weight << '\n';
  }
}

ParticleSet initialize_global(const Scene& scene, std::size_t count, const GlobalInitOptions& options,
                              std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("particle count must be >= 1");
  const auto positions = sample_free_space(scene, count, seed);
  const double pi = std::numbers::pi;

  ParticleSet set;
  set.particles.resize(count);
  set.normalized = true;
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = make_stream(seed, kOrientationStreams + i);
    double roll = 0.0, pitch = 0.0, yaw = 0.0;
    if (options.orientation == OrientationMode::kFull) {
      const Eigen::Vector3d rpy = quaternion_to_euler(uniform_rotation(rng));
      roll = rpy.x(), pitch = rpy.y(), yaw = rpy.z();
    } else {
      std::uniform_real_distribution<double> yaw_dist(-pi, pi);
      std::uniform_real_distribution<double> tilt(-options.roll_pitch_bound, options.roll_pitch_bound);
      yaw = yaw_dist(rng);
      roll = tilt(rng);
      pitch = tilt(rng);
    }
    const auto& p = positions[i];
    set.particles[i] = {Pose6D(p.x(), p.y(), p.z(), roll, pitch, yaw), 1.0 / static_cast<double>(count)};
  }
  return set;
}

ParticleSet initialize_local(const Pose6D& center, const std::array<double, 6>& sigmas,
                             std::size_t count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("particle count must be >= 1");
  for (const double s : sigmas) {
    if (!(s >= 0.0)) throw std::invalid_argument("initialization sigmas must be non-negative");
  }
  const std::array<double, 6> mean{center.x, center.y, center.z, center.roll, center.pitch, center.yaw};

  ParticleSet set;
  set.particles.resize(count);
  set.normalized = true;
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = make_stream(seed, i);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::array<double, 6> v = mean;
    for (int k = 0; k < 6; ++k) {
      if (sigmas[k] > 0.0) v[k] += sigmas[k] * gauss(rng);
    }
    set.particles[i] = {Pose6D(v[0], v[1], v[2], v[3], v[4], v[5]), 1.0 / static_cast<double>(count)};
  }
  return set;
}

ParticleSet motion_update(ParticleSet set, const OdometryDelta& delta, const MotionNoiseParams& noise,
                          std::uint64_t seed) {
  if (!(noise.sigma_linear >= 0.0) || !(noise.sigma_angular >= 0.0)) {
    throw std::invalid_argument("motion noise sigmas must be non-negative");
  }
  const bool noiseless = noise.sigma_linear == 0.0 && noise.sigma_angular == 0.0;
  if (noiseless && is_zero_pose(delta.increment)) return set;

  const Pose6D& d = delta.increment;
  for (std::size_t i = 0; i < set.particles.size(); ++i) {
    Pose6D step = d;
    if (!noiseless) {
      auto rng = make_stream(seed, i);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const double sl = noise.sigma_linear, sa = noise.sigma_angular;
      const double nx = sl * gauss(rng), ny = sl * gauss(rng), nz = sl * gauss(rng);
      const double nr = sa * gauss(rng), np = sa * gauss(rng), nyaw = sa * gauss(rng);
      step = Pose6D(d.x + nx, d.y + ny, d.z + nz, d.roll + nr, d.pitch + np, d.yaw + nyaw);
    }
    set.particles[i].state = compose(set.particles[i].state, step);
  }
  return set;
}

ParticleSet sensor_update(ParticleSet set, const PointCloud& scan, const TsdfMap& map,
                          const SensorModelParams& params, int lanes, std::uint64_t* lookups) {
  params.validate(map);
  if (scan.empty() || set.particles.empty()) return set;

  const ParticleSoA soa = pack(set.particles);
  const Eigen::ArrayXd weights = evaluate_particles_parallel(soa, scan, map, params, lanes, lookups);
  for (std::size_t i = 0; i < set.particles.size(); ++i) {
    set.particles[i].weight = weights[static_cast<Eigen::Index>(i)];
  }
  set.normalized = false;
  return set;
}

ParticleSet normalize(ParticleSet set) {
  std::vector<double> weights(set.particles.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = set.particles[i].weight;
  const double total = tree_reduce_sum(weights);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DegenerateFilterError("total particle weight is zero or non-finite");
  }
  for (auto& p : set.particles) p.weight /= total;
  set.normalized = true;
  return set;
}

ParticleSet resample(const ParticleSet& set, std::uint64_t seed) {
  if (!set.normalized) throw std::invalid_argument("resample requires a normalized particle set");
  const std::size_t n = set.particles.size();
  if (n == 0) return set;

  std::mt19937_64 rng(mix_seed(seed));
  const double step = 1.0 / static_cast<double>(n);
  const double offset = std::uniform_real_distribution<double>(0.0, step)(rng);

  ParticleSet out;
  out.particles.reserve(n);
  out.normalized = true;
  std::size_t i = 0;
  double cumulative = set.particles[0].weight;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = offset + static_cast<double>(k) * step;
    while (target >= cumulative && i + 1 < n) cumulative += set.particles[++i].weight;
    out.particles.push_back({set.particles[i].state, step});
  }
  return out;
}

double effective_sample_size(const ParticleSet& set) {
  double sum_sq = 0.0;
  for (const auto& p : set.particles) sum_sq += p.weight * p.weight;
  return sum_sq > 0.0 ? 1.0 / sum_sq : 0.0;
}

Pose6D estimate_pose(const ParticleSet& set, EstimateMode mode, int lanes) {
  if (set.particles.empty()) throw std::invalid_argument("cannot estimate a pose from no particles");
  if (mode == EstimateMode::kMax) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < set.particles.size(); ++i) {
      if (set.particles[i].weight > set.particles[best].weight) best = i;
    }
    return set.particles[best].state;
  }
  return weighted_mean_pose(tree_reduce_weighted_pose(pack(set.particles), lanes));
}

}  // namespace tsdf_mcl
