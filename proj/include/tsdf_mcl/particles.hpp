#pragma once

#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "tsdf_mcl/geometry.hpp"

namespace tsdf_mcl {

/// Weighted pose hypothesis.
struct Particle {
  Pose6D state;
  double weight = 0.0;
};

/// Owned particle collection. `normalized` is set only by normalize() and
/// resample(); any weight change clears it.
struct ParticleSet {
  std::vector<Particle> particles;
  bool normalized = false;

  std::size_t size() const { return particles.size(); }
  double total_weight() const;
};

/// Total weight is zero or non-finite; the caller decides how to recover.
class DegenerateFilterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Debug dump, one `x y z roll pitch yaw weight` line per particle.
void write_particles(std::ostream& out, const ParticleSet& set);

}  // namespace tsdf_mcl
