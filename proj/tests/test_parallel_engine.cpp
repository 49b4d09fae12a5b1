#include <doctest.h>

#include <json.hpp>
#include <random>

#include "test_support.hpp"
#include "tsdf_mcl/mcl.hpp"
#include "tsdf_mcl/parallel_engine.hpp"

using namespace tsdf_mcl;
using test_support::room_world;

namespace {

std::vector<Particle> random_particles(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-10.0, 10.0), ang(-3.0, 3.0), w(0.0, 1.0);
  std::vector<Particle> out(n);
  for (auto& p : out) p = {Pose6D(pos(rng), pos(rng), pos(rng), ang(rng), ang(rng) / 2, ang(rng)), w(rng)};
  return out;
}

bool same_particle(const Particle& a, const Particle& b) {
  const auto& s = a.state;
  const auto& t = b.state;
  return s.x == t.x && s.y == t.y && s.z == t.z && s.roll == t.roll && s.pitch == t.pitch && s.yaw == t.yaw &&
         a.weight == b.weight;
}

const Pose6D kRoomPose(10.5, 5.0, 0.5, 0.0, 0.0, 0.6);

}  // namespace

TEST_CASE("pack and unpack") {
  CHECK(pack({}).size() == 0);
  CHECK(pack({}).x.size() == 0);
  CHECK(pack({}).yaw.size() == 0);

  const auto three = random_particles(3, 1);
  const ParticleSoA soa = pack(three);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(soa.x[i] == three[static_cast<std::size_t>(i)].state.x);
    CHECK(soa.weight[i] == three[static_cast<std::size_t>(i)].weight);
  }

  const auto many = random_particles(10000, 2);
  const auto back = unpack(pack(many));
  REQUIRE(back.size() == many.size());
  bool all_equal = true;
  for (std::size_t i = 0; i < many.size(); ++i) all_equal = all_equal && same_particle(back[i], many[i]);
  CHECK(all_equal);
}

TEST_CASE("run_lanes covers every index once") {
  for (const int lanes : {1, 2, 3, 8, 64}) {
    std::vector<int> hits(37, 0);
    std::vector<int> owner(37, -1);
    run_lanes(37, lanes, [&](Eigen::Index b, Eigen::Index e, int lane) {
      for (Eigen::Index i = b; i < e; ++i) {
        ++hits[static_cast<std::size_t>(i)];
        owner[static_cast<std::size_t>(i)] = lane;
      }
    });
    for (const int h : hits) CHECK(h == 1);
    // Contiguous blocks: owners are non-decreasing.
    CHECK(std::is_sorted(owner.begin(), owner.end()));
  }
  CHECK_THROWS(run_lanes(10, 0, [](Eigen::Index, Eigen::Index, int) {}));
}

TEST_CASE("parallel evaluation is lane invariant") {
  const auto& world = room_world();
  const PointCloud scan =
      simulate_scan(world.scene, kRoomPose, ScanPattern::uniform(4, -0.1, 0.1, 125, 100.0), 0.0, 1);
  REQUIRE(scan.size() == 500);
  SensorModelParams params;
  params.subsample_stride = 1;
  params.with_lut(0.3, 0.006);

  const ParticleSet cloud = initialize_local(kRoomPose, {0.5, 0.5, 0.1, 0.05, 0.05, 0.3}, 10000, 4);
  const ParticleSoA soa = pack(cloud.particles);
  std::uint64_t base_lookups = 0;
  const Eigen::ArrayXd base = evaluate_particles_parallel(soa, scan, world.map, params, 1, &base_lookups);
  CHECK(base_lookups == 10000u * 500u);
  for (const int lanes : {2, 4, 8}) {
    std::uint64_t lookups = 0;
    const Eigen::ArrayXd w = evaluate_particles_parallel(soa, scan, world.map, params, lanes, &lookups);
    CHECK((w == base).all());
    CHECK(lookups == base_lookups);
  }

  SUBCASE("single particle equals the sequential evaluation") {
    const ParticleSoA one = pack(std::span(cloud.particles).first(1));
    const Eigen::ArrayXd w = evaluate_log_likelihoods(one, scan, world.map, params, 4);
    CHECK(w[0] == particle_log_likelihood(cloud.particles[0].state, scan, world.map, params));
  }
  SUBCASE("identical particles get identical weights") {
    std::vector<Particle> twins(2, cloud.particles[7]);
    const Eigen::ArrayXd w = evaluate_particles_parallel(pack(twins), scan, world.map, params, 2);
    CHECK(w[0] == w[1]);
  }
}

TEST_CASE("tree reduction") {
  CHECK(tree_reduce_sum(std::vector<double>{1, 2, 3, 4}) == 10.0);
  CHECK(tree_reduce(ReductionBuffer(std::vector<double>{})).sum == 0.0);

  const TreeReduction eight = tree_reduce(ReductionBuffer(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}), 4);
  CHECK(eight.sum == 36.0);
  CHECK(eight.iterations == 3);

  const std::vector<double> five{0.1, 0.2, 0.3, 0.4, 0.5};
  const ReductionBuffer padded(five);
  CHECK(padded.size() == 8);
  CHECK(padded.logical_size() == 5);
  CHECK(padded.values()[7] == 0.0);
  double sequential = 0.0;
  for (const double v : five) sequential += v;
  CHECK(tree_reduce(padded, 2).sum == doctest::Approx(sequential).epsilon(1e-15));
  CHECK(tree_reduce(padded).iterations == 3);

  SUBCASE("pairing order") {
    // ((a + b) + (c + d)) differs from the left fold for these values.
    const std::vector<double> v{1e16, 1.0, -1e16, 1.0};
    CHECK(tree_reduce_sum(v) == (1e16 + 1.0) + (-1e16 + 1.0));
  }

  SUBCASE("one million uniform values") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> values(1'000'000);
    for (auto& v : values) v = u(rng);
    double fold = 0.0;
    for (const double v : values) fold += v;
    for (const int lanes : {1, 3, 8}) {
      const double tree = tree_reduce_sum(values, lanes);
      CHECK(std::abs(tree - fold) / fold < 1e-7);
      CHECK(tree == tree_reduce_sum(values, 1));
    }
  }
}

TEST_CASE("weighted pose reduction") {
  SUBCASE("symmetric positions sum to zero") {
    std::vector<Particle> ps;
    for (int i = 1; i <= 50; ++i) {
      ps.push_back({Pose6D(i * 0.3, -i * 0.1, i * 0.7, 0, 0, 0), 1.0});
      ps.push_back({Pose6D(-i * 0.3, i * 0.1, -i * 0.7, 0, 0, 0), 1.0});
    }
    const WeightedPoseSums s = tree_reduce_weighted_pose(pack(ps), 4);
    CHECK(s.position.cwiseAbs().maxCoeff() < 1e-9 * 100);
    CHECK(s.total_weight == 100.0);
  }
  SUBCASE("single nonzero weight") {
    auto ps = random_particles(10, 3);
    for (auto& p : ps) p.weight = 0.0;
    ps[4].weight = 0.25;
    const WeightedPoseSums s = tree_reduce_weighted_pose(pack(ps), 2);
    CHECK(s.position.x() == 0.25 * ps[4].state.x);
    CHECK(s.position.z() == 0.25 * ps[4].state.z);
    // The heaviest particle is its own hemisphere reference, so it is never flipped.
    const auto q = ps[4].state.quaternion();
    CHECK(s.quaternion[0] == doctest::Approx(0.25 * q.w()));
    CHECK(s.quaternion[3] == doctest::Approx(0.25 * q.z()));
  }
  SUBCASE("matches a sequential accumulation") {
    const auto ps = random_particles(1000, 5);
    std::size_t heaviest = 0;
    for (std::size_t i = 1; i < ps.size(); ++i) {
      if (ps[i].weight > ps[heaviest].weight) heaviest = i;
    }
    const Eigen::Vector4d ref = ps[heaviest].state.quaternion().coeffs();
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    Eigen::Vector4d quat = Eigen::Vector4d::Zero();  // (x, y, z, w)
    double total = 0.0;
    for (const auto& p : ps) {
      Eigen::Vector4d q = p.state.quaternion().coeffs();
      if (q.dot(ref) < 0) q = -q;
      pos += p.weight * p.state.position();
      quat += p.weight * q;
      total += p.weight;
    }
    const WeightedPoseSums s = tree_reduce_weighted_pose(pack(ps), 8);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    CHECK(rel(s.total_weight, total) < 1e-7);
    for (int k = 0; k < 3; ++k) CHECK(rel(s.position[k], pos[k]) < 1e-7);
    CHECK(rel(s.quaternion[0], quat[3]) < 1e-7);
    for (int k = 0; k < 3; ++k) CHECK(rel(s.quaternion[k + 1], quat[k]) < 1e-7);
  }
  SUBCASE("zero total weight is degenerate") {
    auto ps = random_particles(4, 1);
    for (auto& p : ps) p.weight = 0.0;
    CHECK_THROWS_AS(tree_reduce_weighted_pose(pack(ps)), DegenerateFilterError);
  }
}

TEST_CASE("benchmark records") {
  const auto& world = room_world();
  const PointCloud scan =
      simulate_scan(world.scene, kRoomPose, ScanPattern::uniform(4, -0.1, 0.1, 100, 100.0), 0.0, 1);
  SensorModelParams params;
  params.with_lut(0.3, 0.006);

  BenchmarkSetup setup;
  setup.center = kRoomPose;
  setup.trials = 3;
  setup.n_particles = 2000;
  const BenchmarkRecord small = benchmark_sensor_update(setup, scan, world.map, params);
  CHECK(small.n_particles == 2000);
  CHECK(small.lanes == 1);
  CHECK(small.scan_points == scan.size());
  CHECK(small.stride == params.subsample_stride);
  CHECK(small.trials == 3);
  CHECK(small.median_ms > 0.0);
  CHECK(small.lookups == 2000u * ((scan.size() + 3) / 4));

  const auto j = nlohmann::json::parse(small.to_json());
  for (const char* key : {"n_particles", "lanes", "scan_points", "stride", "median_ms", "trials", "lookups"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["n_particles"] == 2000);

  setup.n_particles = 16000;
  const BenchmarkRecord large = benchmark_sensor_update(setup, scan, world.map, params);
  CHECK(large.median_ms > small.median_ms);

  setup.trials = 0;
  CHECK_THROWS(benchmark_sensor_update(setup, scan, world.map, params));
  CHECK(physical_core_count() >= 1);
}
