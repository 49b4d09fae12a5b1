#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tsdf_mcl/scene.hpp"

using namespace tsdf_mcl;

namespace {

// Closed shell with interior [0, w] x [0, d] x [0, h] and 0.2 m thick walls.
Scene closed_room(double w, double d, double h) {
  const double t = 0.2;
  std::vector<Box> walls{
      {{-t / 2, d / 2, h / 2}, {t / 2, d / 2 + t, h / 2 + t}},
      {{w + t / 2, d / 2, h / 2}, {t / 2, d / 2 + t, h / 2 + t}},
      {{w / 2, -t / 2, h / 2}, {w / 2 + t, t / 2, h / 2 + t}},
      {{w / 2, d + t / 2, h / 2}, {w / 2 + t, t / 2, h / 2 + t}},
      {{w / 2, d / 2, -t / 2}, {w / 2 + t, d / 2 + t, t / 2}},
      {{w / 2, d / 2, h + t / 2}, {w / 2 + t, d / 2 + t, t / 2}},
  };
  return Scene(walls, Eigen::AlignedBox3d(Eigen::Vector3d(-t, -t, -t), Eigen::Vector3d(w + t, d + t, h + t)));
}

// Distance from p to an axis-aligned box by clamping, valid outside the box.
double outside_distance(const Box& b, const Eigen::Vector3d& p) {
  const Eigen::Vector3d lo = b.center - b.half_extents, hi = b.center + b.half_extents;
  return (p - p.cwiseMax(lo).cwiseMin(hi)).norm();
}

}  // namespace

TEST_CASE("box signed distance") {
  const Box box{Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()};
  CHECK(box.signed_distance({2, 0, 0}) == doctest::Approx(1.0));
  CHECK(box.signed_distance({0, 0, 0}) == doctest::Approx(-1.0));
  CHECK(box.signed_distance({2, 2, 0}) == doctest::Approx(std::sqrt(2.0)));
  CHECK(box.signed_distance({1, 0.3, -0.2}) == doctest::Approx(0.0));
  CHECK(box.signed_distance({0.5, 0, 0}) == doctest::Approx(-0.5));

  const Box thin{{1, 2, 3}, {0.5, 2.0, 0.1}};
  for (const Eigen::Vector3d p : {Eigen::Vector3d(3, 2, 3), Eigen::Vector3d(-1, 7, 0), Eigen::Vector3d(1.7, 4.5, 3.3)}) {
    CHECK(thin.signed_distance(p) == doctest::Approx(outside_distance(thin, p)));
  }
}

TEST_CASE("scene validation and parsing") {
  std::istringstream text(
      "# comment\n"
      "box 0 0 0 1 1 1\n"
      "box 5 0 0 0.5 0.5 0.5\n"
      "bounds -2 -2 -2 6 2 2\n");
  const Scene scene = Scene::parse(text);
  CHECK(scene.solids().size() == 2);
  CHECK(scene_sdf(scene, {3, 0, 0}) == doctest::Approx(1.5));
  CHECK(scene_sdf(scene, {5, 0, 0}) == doctest::Approx(-0.5));

  std::stringstream round;
  scene.write(round);
  const Scene back = Scene::parse(round);
  CHECK(back.solids().size() == 2);
  CHECK(back.bounds().max().x() == doctest::Approx(6.0));

  std::istringstream bad_box("box 0 0 0 -1 1 1\n");
  CHECK_THROWS(Scene::parse(bad_box));
  std::istringstream outside("box 0 0 0 1 1 1\nbounds 0 0 0 5 5 5\n");
  CHECK_THROWS(Scene::parse(outside));
  std::istringstream unknown("sphere 0 0 0 1\n");
  CHECK_THROWS(Scene::parse(unknown));
}

TEST_CASE("ray cast against slabs") {
  const Box wall{{5.5, 0, 0}, {0.5, 10, 10}};
  const Scene scene({wall}, Eigen::AlignedBox3d(Eigen::Vector3d(-10, -10, -10), Eigen::Vector3d(10, 10, 10)));

  const auto hit = ray_cast(scene, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX(), 100.0);
  REQUIRE(hit);
  CHECK(*hit == doctest::Approx(5.0));

  CHECK_FALSE(ray_cast(scene, Eigen::Vector3d::Zero(), -Eigen::Vector3d::UnitX(), 100.0));
  CHECK_FALSE(ray_cast(scene, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX(), 4.0));

  const auto diag = ray_cast(scene, Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 1, 0).normalized(), 100.0);
  REQUIRE(diag);
  CHECK(*diag == doctest::Approx(5.0 * std::sqrt(2.0)));

  // Ray parallel to a slab and outside it misses.
  CHECK_FALSE(ray_cast(scene, Eigen::Vector3d(0, 11, 0), Eigen::Vector3d::UnitX(), 100.0));
}

TEST_CASE("build_tsdf matches the scene SDF") {
  const Scene scene = closed_room(4.0, 3.0, 2.0);
  const double res = 0.1, trunc = 0.3;
  const TsdfMap map = build_tsdf(scene, res, trunc, 8);
  REQUIRE(map.block_count() > 0);

  std::size_t cells = 0;
  double worst = 0.0;
  map.for_each_block([&](const CellIndex& coarse, const FineBlock& block) {
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const CellIndex cell = coarse * 8 + CellIndex(x, y, z);
          const Eigen::Vector3d c = map.cell_center(cell);
          const double expected = std::clamp(scene_sdf(scene, c), -trunc, trunc);
          worst = std::max(worst, std::abs(block.values[x + 8 * (y + 8 * z)] - expected));
          ++cells;
        }
  });
  CHECK(cells > 0);
  CHECK(worst <= res / 2 + 1e-6);

  // Every allocated block holds at least one informative value.
  map.for_each_block([&](const CellIndex&, const FineBlock& block) {
    CHECK(std::any_of(block.values.begin(), block.values.end(),
                      [&](float v) { return std::abs(v) < static_cast<float>(trunc); }));
  });
  // Deep free space is not allocated.
  CHECK_FALSE(map.is_allocated(map.world_to_cell({2.0, 1.5, 1.0})));
  CHECK(map.lookup({2.0, 1.5, 1.0}) == static_cast<float>(trunc));
}

TEST_CASE("build_tsdf known cell values") {
  // Wall face at x = 1.0; cell centers at 0.05 + 0.1 k.
  const Box wall{{1.5, 0.0, 0.0}, {0.5, 2.0, 2.0}};
  const Scene scene({wall}, Eigen::AlignedBox3d(Eigen::Vector3d(-2, -2, -2), Eigen::Vector3d(2, 2, 2)));
  const TsdfMap map = build_tsdf(scene, 0.1, 0.3);
  CHECK(map.cell_value({9, 0, 0}) == doctest::Approx(0.05).epsilon(1e-5));
  CHECK(map.cell_value({10, 0, 0}) == doctest::Approx(-0.05).epsilon(1e-5));
  CHECK(map.cell_value({5, 0, 0}) == doctest::Approx(0.3));

  // Surface through a cell center stores 0.
  const Box centered{{1.55, 0.0, 0.0}, {0.5, 2.0, 2.0}};
  const Scene s2({centered}, Eigen::AlignedBox3d(Eigen::Vector3d(-2, -2, -2), Eigen::Vector3d(3, 2, 2)));
  CHECK(std::abs(build_tsdf(s2, 0.1, 0.3).cell_value({10, 0, 0})) < 1e-6);
}

TEST_CASE("single wall allocates a thin slab") {
  const Box wall{{5.0, 5.0, 1.5}, {0.05, 5.0, 1.5}};
  const Scene scene({wall}, Eigen::AlignedBox3d(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(10, 10, 3)));
  const TsdfMap map = build_tsdf(scene, 0.1, 0.3, 8);
  int min_x = 1 << 20, max_x = -(1 << 20);
  map.for_each_block([&](const CellIndex& c, const FineBlock&) {
    min_x = std::min(min_x, c.x());
    max_x = std::max(max_x, c.x());
  });
  // Band |x - 5| < 0.35 spans cells 46..53, i.e. blocks 5 and 6 of 0.8 m.
  CHECK(min_x >= 5);
  CHECK(max_x <= 6);
}

TEST_CASE("simulated scans") {
  const Scene room = closed_room(10.0, 10.0, 3.0);
  const Pose6D center(5.0, 5.0, 1.5, 0, 0, 0.3);

  SUBCASE("horizontal ring hits walls everywhere") {
    const ScanPattern ring = ScanPattern::uniform(1, 0.0, 0.0, 360, 100.0);
    const PointCloud scan = simulate_scan(room, center, ring, 0.0, 1);
    CHECK(scan.size() == 360);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < scan.points.cols(); ++i) {
      worst = std::max(worst, std::abs(scene_sdf(room, transform_point(center, scan.points.col(i)))));
    }
    CHECK(worst < 1e-6);
  }
  SUBCASE("same seed gives the same cloud") {
    const ScanPattern p = ScanPattern::uniform(4, -0.2, 0.2, 90, 100.0);
    const PointCloud a = simulate_scan(room, center, p, 0.02, 42);
    const PointCloud b = simulate_scan(room, center, p, 0.02, 42);
    const PointCloud c = simulate_scan(room, center, p, 0.02, 43);
    CHECK(a.points == b.points);
    CHECK(a.points != c.points);
  }
  SUBCASE("point count bounded by ray count") {
    const PointCloud scan = simulate_scan(room, center, ScanPattern::vlp16(), 0.0, 1);
    CHECK(scan.size() <= 14400);
    CHECK(scan.size() == 14400);  // closed room, nothing escapes
    const PointCloud short_range =
        simulate_scan(room, center, ScanPattern::uniform(1, 0.0, 0.0, 100, 4.0), 0.0, 1);
    CHECK(short_range.size() == 0);
  }
  SUBCASE("vlp16 defaults") {
    const ScanPattern p = ScanPattern::vlp16();
    REQUIRE(p.ring_elevations.size() == 16);
    CHECK(p.ring_elevations.front() == doctest::Approx(-15.0 * std::numbers::pi / 180.0));
    CHECK(p.ring_elevations.back() == doctest::Approx(15.0 * std::numbers::pi / 180.0));
    CHECK(p.azimuth_count == 900);
    CHECK(p.max_range == 100.0);
  }
  SUBCASE("point cloud text round trip") {
    const PointCloud scan = simulate_scan(room, center, ScanPattern::uniform(2, -0.1, 0.1, 8, 100.0), 0.0, 1);
    std::stringstream ss;
    scan.write(ss);
    const PointCloud back = PointCloud::read(ss);
    REQUIRE(back.size() == scan.size());
    CHECK((back.points - scan.points).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("free-space sampling") {
  const Scene room = closed_room(10.0, 10.0, 3.0);

  SUBCASE("samples are inside bounds and outside solids") {
    const auto samples = sample_free_space(room, 1000, 3);
    REQUIRE(samples.size() == 1000);
    for (const auto& p : samples) {
      CHECK(room.bounds().contains(p));
      CHECK(scene_sdf(room, p) > 0.0);
      CHECK((p.array() >= 0.0).all());
      CHECK(p.x() <= 10.0);
      CHECK(p.y() <= 10.0);
      CHECK(p.z() <= 3.0);
    }
  }
  SUBCASE("empirical mean is the room center") {
    const std::size_t n = 100000;
    const auto samples = sample_free_space(room, n, 5);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : samples) mean += p;
    mean /= static_cast<double>(n);
    // Uniform on [0, L]: sigma of the mean is L / sqrt(12 n).
    const Eigen::Vector3d extent(10.0, 10.0, 3.0);
    for (int k = 0; k < 3; ++k) {
      const double sigma = extent[k] / std::sqrt(12.0 * static_cast<double>(n));
      CHECK(std::abs(mean[k] - extent[k] / 2) < 3 * sigma);
    }
  }
  SUBCASE("scene without free space is rejected") {
    const Box solid{{0, 0, 0}, {1, 1, 1}};
    const Scene full({solid}, solid.aabb());
    CHECK_THROWS_AS(sample_free_space(full, 10, 1), SceneError);
  }
}
