#include "tsdf_mcl/sensor_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsdf_mcl {

LikelihoodTable::LikelihoodTable(double sigma, double truncation, double resolution)
    : sigma_(sigma), resolution_(resolution) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sensor sigma must be positive");
  if (!(resolution > 0.0)) throw std::invalid_argument("lut_resolution must be positive");
  if (!(truncation > 0.0)) throw std::invalid_argument("truncation must be positive");
  half_count_ = static_cast<int>(std::ceil(truncation / resolution - 1e-9));
  const std::size_t n = 2 * static_cast<std::size_t>(half_count_) + 1;
  likelihood_.resize(n);
  log_likelihood_.resize(n);
  for (int k = -half_count_; k <= half_count_; ++k) {
    const double d = k * resolution;
    const auto i = static_cast<std::size_t>(k + half_count_);
    likelihood_[i] = point_likelihood(d, sigma);
    log_likelihood_[i] = std::log(likelihood_[i]);
  }
}

double LikelihoodTable::interpolate(const std::vector<double>& table, double d) const {
  const double u = std::clamp(d / resolution_, -static_cast<double>(half_count_),
                              static_cast<double>(half_count_)) + half_count_;
  const auto i = std::min(static_cast<std::size_t>(u), table.size() - 2);
  const double f = u - static_cast<double>(i);
  return table[i] + f * (table[i + 1] - table[i]);
}

SensorModelParams& SensorModelParams::with_lut(double truncation, double resolution) {
  lut_resolution = resolution;
  lut = std::make_shared<const LikelihoodTable>(sigma, truncation, resolution);
  return *this;
}

void SensorModelParams::validate(const TsdfMap& map) const {
  if (!(sigma > 0.0)) throw std::invalid_argument("sensor sigma must be positive");
  if (subsample_stride < 1) throw std::invalid_argument("subsample_stride must be >= 1");
  if (lut) {
    if (lut->sigma() != sigma) throw std::invalid_argument("likelihood table sigma differs from params");
    // Map distances are stored as float; compare at that precision.
    if (static_cast<float>(lut->half_extent()) < map.truncation()) {
      throw std::invalid_argument("likelihood table does not cover the truncation band");
    }
  }
}

double particle_log_likelihood(const Pose6D& pose, const PointCloud& scan, const TsdfMap& map,
                               const SensorModelParams& params, std::uint64_t* lookups) {
  const Eigen::Matrix3d rotation = pose.rotation();
  const Eigen::Vector3d translation = pose.position();
  const LikelihoodTable* lut = params.lut.get();
  const bool interpolated = params.lookup == MapLookup::kInterpolated;

  double log_sum = 0.0;
  std::uint64_t reads = 0;
  for (Eigen::Index i = 0; i < scan.points.cols(); i += params.subsample_stride) {
    const Eigen::Vector3d world = rotation * scan.points.col(i) + translation;
    const double d = interpolated ? map.lookup_interpolated(world) : map.lookup(world);
    log_sum += lut ? lut->log_likelihood(d) : std::log(point_likelihood(d, params.sigma));
    ++reads;
  }
  if (lookups) *lookups += reads;
  return log_sum;
}

}  // namespace tsdf_mcl
