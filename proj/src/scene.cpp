#include "tsdf_mcl/scene.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_set>

#include "tsdf_mcl/random.hpp"

namespace tsdf_mcl {

double Box::signed_distance(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d q = (p - center).cwiseAbs() - half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

std::optional<std::pair<double, double>> Box::slab_interval(const Eigen::Vector3d& origin,
                                                            const Eigen::Vector3d& dir) const {
  const Eigen::Vector3d lo = center - half_extents;
  const Eigen::Vector3d hi = center + half_extents;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) {
      // Parallel to this slab: either always inside it or never.
      if (origin[axis] < lo[axis] || origin[axis] > hi[axis]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[axis];
    double t0 = (lo[axis] - origin[axis]) * inv;
    double t1 = (hi[axis] - origin[axis]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  return std::make_pair(t_near, t_far);
}

Scene::Scene(std::vector<Box> solids, const Eigen::AlignedBox3d& bounds)
    : solids_(std::move(solids)), bounds_(bounds) {
  if (solids_.empty()) throw SceneError("scene needs at least one solid");
  if (bounds_.isEmpty()) throw SceneError("scene bounds are empty");
  // Tolerates rounding in text-specified extents such as 10 + 10.2.
  const double slack = 1e-9 * (1.0 + bounds_.diagonal().norm());
  const Eigen::AlignedBox3d padded(bounds_.min().array() - slack, bounds_.max().array() + slack);
  for (const auto& box : solids_) {
    if ((box.half_extents.array() <= 0.0).any()) throw SceneError("box half-extents must be positive");
    if (!padded.contains(box.aabb())) throw SceneError("scene bounds must contain every solid");
  }
}

Scene Scene::parse(std::istream& in) {
  std::vector<Box> solids;
  std::optional<Eigen::AlignedBox3d> bounds;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string keyword;
    if (!(fields >> keyword)) continue;
    double v[6];
    if (!(fields >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5])) {
      throw SceneError("scene line " + std::to_string(line_no) + ": expected six numbers after `" +
                       keyword + "`");
    }
    if (keyword == "box") {
      solids.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    } else if (keyword == "bounds") {
      bounds = Eigen::AlignedBox3d(Eigen::Vector3d(v[0], v[1], v[2]), Eigen::Vector3d(v[3], v[4], v[5]));
    } else {
      throw SceneError("scene line " + std::to_string(line_no) + ": unknown keyword `" + keyword + "`");
    }
  }
  if (!bounds) {
    Eigen::AlignedBox3d hull;
    for (const auto& box : solids) hull.extend(box.aabb());
    bounds = hull;
  }
  return Scene(std::move(solids), *bounds);
}

Scene Scene::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file " + path);
  return parse(in);
}

void Scene::write(std::ostream& out) const {
  out << std::setprecision(17);
  for (const auto& b : solids_) {
    out << "box " << b.center.x() << ' ' << b.center.y() << ' ' << b.center.z() << ' '
        << b.half_extents.x() << ' ' << b.half_extents.y() << ' ' << b.half_extents.z() << '\n';
  }
  const auto& lo = bounds_.min();
  const auto& hi = bounds_.max();
  out << "bounds " << lo.x() << ' ' << lo.y() << ' ' << lo.z() << ' ' << hi.x() << ' ' << hi.y()
      << ' ' << hi.z() << '\n';
}

double scene_sdf(const Scene& scene, const Eigen::Vector3d& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& box : scene.solids()) d = std::min(d, box.signed_distance(p));
  return d;
}

std::optional<double> ray_cast(const Scene& scene, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& dir, double max_range) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& box : scene.solids()) {
    const auto interval = box.slab_interval(origin, dir);
    if (!interval) continue;
    const auto [t_near, t_far] = *interval;
    const double t = t_near > 0.0 ? t_near : t_far;
    if (t > 0.0 && t < best) best = t;
  }
  if (best <= max_range) return best;
  return std::nullopt;
}

TsdfMap build_tsdf(const Scene& scene, double fine_resolution, double truncation, int block_size) {
  if (!(truncation >= fine_resolution)) {
    throw std::invalid_argument("truncation must be at least fine_resolution");
  }
  TsdfMap map(static_cast<float>(fine_resolution), static_cast<float>(truncation), block_size);
  const double trunc = map.truncation();

  // Pass 1: find every block holding a cell within the truncation band of some surface.
  std::unordered_set<CellIndex, CellIndexHash> informative;
  for (const auto& box : scene.solids()) {
    const Eigen::Vector3d lo_world = box.aabb().min().array() - trunc;
    const Eigen::Vector3d hi_world = box.aabb().max().array() + trunc;
    const CellIndex lo = map.world_to_cell(lo_world);
    const CellIndex hi = map.world_to_cell(hi_world);
    CellIndex last_coarse(std::numeric_limits<int>::min(), 0, 0);
    for (int z = lo.z(); z <= hi.z(); ++z) {
      for (int y = lo.y(); y <= hi.y(); ++y) {
        for (int x = lo.x(); x <= hi.x(); ++x) {
          const CellIndex cell(x, y, z);
          const CellIndex coarse = map.split(cell).coarse;
          if (coarse == last_coarse || informative.count(coarse)) continue;
          if (std::abs(box.signed_distance(map.cell_center(cell))) >= trunc) continue;
          if (std::abs(scene_sdf(scene, map.cell_center(cell))) < trunc) {
            informative.insert(coarse);
            last_coarse = coarse;
          }
        }
      }
    }
  }

  // Pass 2: fill each informative block completely, so cells deep inside solids read -truncation.
  const int bs = map.block_size();
  for (const auto& coarse : informative) {
    const CellIndex base = coarse * bs;
    for (int z = 0; z < bs; ++z) {
      for (int y = 0; y < bs; ++y) {
        for (int x = 0; x < bs; ++x) {
          const CellIndex cell = base + CellIndex(x, y, z);
          map.set_cell(cell, static_cast<float>(scene_sdf(scene, map.cell_center(cell))));
        }
      }
    }
  }
  return map;
}

ScanPattern ScanPattern::vlp16() {
  constexpr double deg = std::numbers::pi / 180.0;
  ScanPattern p;
  for (int ring = 0; ring < 16; ++ring) p.ring_elevations.push_back((-15.0 + 2.0 * ring) * deg);
  p.azimuth_count = 900;
  p.max_range = 100.0;
  return p;
}

ScanPattern ScanPattern::uniform(int rings, double min_elevation, double max_elevation,
                                 int azimuth_count, double max_range) {
  ScanPattern p;
  p.azimuth_count = azimuth_count;
  p.max_range = max_range;
  for (int ring = 0; ring < rings; ++ring) {
    const double f = rings == 1 ? 0.5 : static_cast<double>(ring) / (rings - 1);
    p.ring_elevations.push_back(rings == 1 ? 0.5 * (min_elevation + max_elevation)
                                           : min_elevation + f * (max_elevation - min_elevation));
  }
  p.validate();
  return p;
}

void ScanPattern::validate() const {
  if (azimuth_count < 1) throw std::invalid_argument("scan pattern needs at least one azimuth");
  if (!(max_range > 0.0)) throw std::invalid_argument("scan max_range must be positive");
  if (ring_elevations.empty()) throw std::invalid_argument("scan pattern needs at least one ring");
  for (std::size_t i = 1; i < ring_elevations.size(); ++i) {
    if (!(ring_elevations[i] > ring_elevations[i - 1])) {
      throw std::invalid_argument("ring elevations must be strictly increasing");
    }
  }
}

PointCloud PointCloud::read(std::istream& in) {
  std::vector<Eigen::Vector3d> pts;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    Eigen::Vector3d p;
    if (fields >> p.x() >> p.y() >> p.z()) pts.push_back(p);
  }
  PointCloud cloud;
  cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) cloud.points.col(static_cast<Eigen::Index>(i)) = pts[i];
  return cloud;
}

void PointCloud::write(std::ostream& out) const {
  out << std::setprecision(9);
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out << points(0, i) << ' ' << points(1, i) << ' ' << points(2, i) << '\n';
  }
}

PointCloud simulate_scan(const Scene& scene, const Pose6D& sensor_pose, const ScanPattern& pattern,
                         double noise_sigma, std::uint64_t seed) {
  pattern.validate();
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);

  const Eigen::Matrix3d rotation = sensor_pose.rotation();
  const Eigen::Vector3d origin = sensor_pose.position();

  std::vector<Eigen::Vector3d> hits;
  hits.reserve(pattern.ray_count());
  for (const double elevation : pattern.ring_elevations) {
    const double ce = std::cos(elevation), se = std::sin(elevation);
    for (int j = 0; j < pattern.azimuth_count; ++j) {
      const double azimuth = 2.0 * std::numbers::pi * j / pattern.azimuth_count;
      const Eigen::Vector3d dir_sensor(ce * std::cos(azimuth), ce * std::sin(azimuth), se);
      const auto t = ray_cast(scene, origin, rotation * dir_sensor, pattern.max_range);
      if (!t) continue;
      double range = *t;
      if (noise_sigma > 0.0) range += noise(rng);
      if (range <= 0.0 || range > pattern.max_range) continue;
      hits.push_back(dir_sensor * range);
    }
  }

  PointCloud cloud;
  cloud.points.resize(3, static_cast<Eigen::Index>(hits.size()));
  for (std::size_t i = 0; i < hits.size(); ++i) cloud.points.col(static_cast<Eigen::Index>(i)) = hits[i];
  return cloud;
}

std::vector<Eigen::Vector3d> sample_free_space(const Scene& scene, std::size_t count,
                                               std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_free_space needs count >= 1");
  constexpr std::uint64_t kCheckAfter = 1'000'000;
  constexpr double kMinAcceptance = 1e-3;

  std::mt19937_64 rng(mix_seed(seed));
  const Eigen::Vector3d lo = scene.bounds().min();
  const Eigen::Vector3d hi = scene.bounds().max();
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y()), uz(lo.z(), hi.z());

  std::vector<Eigen::Vector3d> samples;
  samples.reserve(count);
  std::uint64_t trials = 0;
  while (samples.size() < count) {
    const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
    ++trials;
    if (scene_sdf(scene, p) > 0.0) samples.push_back(p);
    if (trials >= kCheckAfter &&
        static_cast<double>(samples.size()) < kMinAcceptance * static_cast<double>(trials)) {
      throw SceneError("free-space acceptance below 0.1% after 1e6 trials; scene has no free space");
    }
  }
  return samples;
}

}  // namespace tsdf_mcl
