#include "tsdf_mcl/parallel_engine.hpp"

#include <algorithm>
#include <barrier>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <thread>

#include <json.hpp>

#include "tsdf_mcl/mcl.hpp"

namespace tsdf_mcl {

ParticleSoA pack(std::span<const Particle> particles) {
  const auto n = static_cast<Eigen::Index>(particles.size());
  ParticleSoA soa;
  for (auto* lane : {&soa.x, &soa.y, &soa.z, &soa.roll, &soa.pitch, &soa.yaw, &soa.weight}) {
    lane->resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Particle& p = particles[static_cast<std::size_t>(i)];
    soa.x[i] = p.state.x;
    soa.y[i] = p.state.y;
    soa.z[i] = p.state.z;
    soa.roll[i] = p.state.roll;
    soa.pitch[i] = p.state.pitch;
    soa.yaw[i] = p.state.yaw;
    soa.weight[i] = p.weight;
  }
  return soa;
}

std::vector<Particle> unpack(const ParticleSoA& soa) {
  std::vector<Particle> particles(static_cast<std::size_t>(soa.size()));
  for (Eigen::Index i = 0; i < soa.size(); ++i) {
    particles[static_cast<std::size_t>(i)] = {soa.pose(i), soa.weight[i]};
  }
  return particles;
}

void run_lanes(Eigen::Index count, int lanes,
               const std::function<void(Eigen::Index, Eigen::Index, int)>& fn) {
  if (lanes < 1) throw std::invalid_argument("lanes must be >= 1");
  const int used = static_cast<int>(std::clamp<Eigen::Index>(count, 1, lanes));
  const Eigen::Index base = count / used, extra = count % used;
  auto begin_of = [&](int lane) { return lane * base + std::min<Eigen::Index>(lane, extra); };

  std::vector<std::jthread> workers;
  workers.reserve(static_cast<std::size_t>(used - 1));
  for (int lane = 1; lane < used; ++lane) {
    workers.emplace_back([&, lane] { fn(begin_of(lane), begin_of(lane + 1), lane); });
  }
  fn(begin_of(0), begin_of(1), 0);
}

Eigen::ArrayXd evaluate_log_likelihoods(const ParticleSoA& soa, const PointCloud& scan,
                                        const TsdfMap& map, const SensorModelParams& params,
                                        int lanes, std::uint64_t* lookups) {
  params.validate(map);
  Eigen::ArrayXd log_sums(soa.size());
  std::vector<std::uint64_t> lane_lookups(static_cast<std::size_t>(std::max(lanes, 1)), 0);
  run_lanes(soa.size(), lanes, [&](Eigen::Index begin, Eigen::Index end, int lane) {
    std::uint64_t reads = 0;
    for (Eigen::Index i = begin; i < end; ++i) {
      log_sums[i] = particle_log_likelihood(soa.pose(i), scan, map, params, &reads);
    }
    lane_lookups[static_cast<std::size_t>(lane)] = reads;
  });
  if (lookups) {
    for (const auto r : lane_lookups) *lookups += r;
  }
  return log_sums;
}

Eigen::ArrayXd evaluate_particles_parallel(const ParticleSoA& soa, const PointCloud& scan,
                                           const TsdfMap& map, const SensorModelParams& params,
                                           int lanes, std::uint64_t* lookups) {
  if (soa.size() == 0) return {};
  const Eigen::ArrayXd log_sums = evaluate_log_likelihoods(soa, scan, map, params, lanes, lookups);
  const double shift = log_sums.maxCoeff();
  if (!std::isfinite(shift)) return Eigen::ArrayXd::Zero(soa.size());
  Eigen::ArrayXd weights(soa.size());
  run_lanes(soa.size(), lanes, [&](Eigen::Index begin, Eigen::Index end, int) {
    for (Eigen::Index i = begin; i < end; ++i) weights[i] = soa.weight[i] * std::exp(log_sums[i] - shift);
  });
  return weights;
}

ReductionBuffer::ReductionBuffer(std::span<const double> values)
    : values_(values.empty() ? 0 : std::bit_ceil(values.size()), 0.0), logical_size_(values.size()) {
  std::copy(values.begin(), values.end(), values_.begin());
}

TreeReduction tree_reduce(ReductionBuffer buffer, int lanes) {
  if (lanes < 1) throw std::invalid_argument("lanes must be >= 1");
  std::span<double> a = buffer.values();
  const std::size_t n = a.size();
  if (n == 0) return {};
  const int iterations = std::countr_zero(n);

  // One halving step over the pair range [first, last) at stride s.
  auto step = [a](std::size_t stride, std::size_t first, std::size_t last) {
    for (std::size_t pair = first; pair < last; ++pair) {
      const std::size_t i = pair * 2 * stride;
      a[i] += a[i + stride];
    }
  };

  const int used = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(lanes), n / 2));
  if (used <= 1) {
    for (std::size_t stride = 1; stride < n; stride *= 2) step(stride, 0, n / (2 * stride));
    return {a[0], iterations};
  }

  std::barrier sync(used);
  auto lane_body = [&](int lane) {
    for (std::size_t stride = 1; stride < n; stride *= 2) {
      const std::size_t pairs = n / (2 * stride);
      const std::size_t base = pairs / used, extra = pairs % used;
      const auto l = static_cast<std::size_t>(lane);
      const std::size_t first = l * base + std::min(l, extra);
      const std::size_t last = first + base + (l < extra ? 1 : 0);
      step(stride, first, last);
      sync.arrive_and_wait();
    }
  };
  {
    std::vector<std::jthread> workers;
    for (int lane = 1; lane < used; ++lane) workers.emplace_back(lane_body, lane);
    lane_body(0);
  }
  return {a[0], iterations};
}

WeightedPoseSums tree_reduce_weighted_pose(const ParticleSoA& soa, int lanes) {
  const Eigen::Index n = soa.size();
  if (n == 0) throw DegenerateFilterError("no particles to average");

  Eigen::Index heaviest = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (soa.weight[i] > soa.weight[heaviest]) heaviest = i;
  }
  const Eigen::Vector4d reference = soa.pose(heaviest).quaternion().coeffs();  // (x, y, z, w)

  // Weighted components: x, y, z, qw, qx, qy, qz.
  std::array<Eigen::ArrayXd, 7> terms;
  for (auto& t : terms) t.resize(n);
  run_lanes(n, lanes, [&](Eigen::Index begin, Eigen::Index end, int) {
    for (Eigen::Index i = begin; i < end; ++i) {
      const double w = soa.weight[i];
      Eigen::Vector4d q = soa.pose(i).quaternion().coeffs();
      if (q.dot(reference) < 0.0) q = -q;
      terms[0][i] = w * soa.x[i];
      terms[1][i] = w * soa.y[i];
      terms[2][i] = w * soa.z[i];
      terms[3][i] = w * q[3];
      terms[4][i] = w * q[0];
      terms[5][i] = w * q[1];
      terms[6][i] = w * q[2];
    }
  });

  WeightedPoseSums sums;
  sums.total_weight = tree_reduce(ReductionBuffer(soa.weight), lanes).sum;
  if (!(sums.total_weight > 0.0) || !std::isfinite(sums.total_weight)) {
    throw DegenerateFilterError("total particle weight is zero or non-finite");
  }
  for (int k = 0; k < 3; ++k) sums.position[k] = tree_reduce(ReductionBuffer(terms[k]), lanes).sum;
  for (int k = 0; k < 4; ++k) sums.quaternion[k] = tree_reduce(ReductionBuffer(terms[3 + k]), lanes).sum;
  return sums;
}

Pose6D weighted_mean_pose(const WeightedPoseSums& sums) {
  if (!(sums.total_weight > 0.0)) throw DegenerateFilterError("total particle weight is zero");
  const Eigen::Vector3d position = sums.position / sums.total_weight;
  Quaternion<double> q(sums.quaternion[0], sums.quaternion[1], sums.quaternion[2], sums.quaternion[3]);
  if (q.norm() == 0.0) throw DegenerateFilterError("orientations cancel; mean rotation undefined");
  q.normalize();
  const Eigen::Vector3d rpy = quaternion_to_euler(q);
  return {position.x(), position.y(), position.z(), rpy.x(), rpy.y(), rpy.z()};
}

std::string BenchmarkRecord::to_json() const {
  nlohmann::ordered_json j;
  j["n_particles"] = n_particles;
  j["lanes"] = lanes;
  j["scan_points"] = scan_points;
  j["stride"] = stride;
  j["median_ms"] = median_ms;
  j["trials"] = trials;
  j["lookups"] = lookups;
  return j.dump();
}

BenchmarkRecord benchmark_sensor_update(const BenchmarkSetup& setup, const PointCloud& scan,
                                        const TsdfMap& map, const SensorModelParams& params) {
  if (setup.n_particles < 1) throw std::invalid_argument("benchmark needs at least one particle");
  if (setup.trials < 1) throw std::invalid_argument("benchmark needs at least one trial");

  const ParticleSet cloud = initialize_local(setup.center, setup.sigmas, setup.n_particles, setup.seed);
  const ParticleSoA soa = pack(cloud.particles);

  BenchmarkRecord record;
  record.n_particles = setup.n_particles;
  record.lanes = setup.lanes;
  record.scan_points = scan.size();
  record.stride = params.subsample_stride;
  record.trials = setup.trials;

  std::vector<double> durations;
  for (int trial = 0; trial < setup.trials; ++trial) {
    ParticleSoA working = soa;
    std::uint64_t lookups = 0;
    const auto start = std::chrono::steady_clock::now();
    working.weight = evaluate_particles_parallel(working, scan, map, params, setup.lanes, &lookups);
    const double total = tree_reduce(ReductionBuffer(working.weight), setup.lanes).sum;
    if (total > 0.0) working.weight /= total;
    const WeightedPoseSums sums = tree_reduce_weighted_pose(working, setup.lanes);
    const auto stop = std::chrono::steady_clock::now();
    if (!std::isfinite(sums.total_weight)) throw DegenerateFilterError("benchmark produced bad weights");
    durations.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    record.lookups = lookups;
  }
  std::sort(durations.begin(), durations.end());
  const std::size_t mid = durations.size() / 2;
  record.median_ms = durations.size() % 2 ? durations[mid] : 0.5 * (durations[mid - 1] + durations[mid]);
  return record;
}

int physical_core_count() {
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::set<std::pair<std::string, std::string>> cores;
  std::string line, physical_id = "0";
  while (std::getline(cpuinfo, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (key == "physical id") physical_id = value;
    if (key == "core id") cores.emplace(physical_id, value);
  }
  if (!cores.empty()) return static_cast<int>(cores.size());
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace tsdf_mcl
