#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace tsdf_mcl {

using CellIndex = Eigen::Vector3i;

struct CellIndexHash {
  std::size_t operator()(const CellIndex& c) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(c.x());
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.y());
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.z());
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

struct GridIndex {
  CellIndex coarse;  ///< block coordinate
  CellIndex fine;    ///< cell coordinate inside the block, each in [0, block_size)
};

/// Dense block of block_size^3 truncated distances, x-fastest.
struct FineBlock {
  std::vector<float> values;
};

class MapFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-level truncated signed distance field.
///
/// The coarse level is a dense table of block slots spanning the bounding box
/// of all allocated blocks; each occupied slot points at a FineBlock holding
/// block_size^3 distances. Cells outside any allocated block read as
/// +truncation (free space).
///
/// Fine cell g covers [origin + g*res, origin + (g+1)*res) on each axis; its
/// value is sampled at the cell center.
class TsdfMap {
 public:
  static constexpr int kDefaultBlockSize = 16;

  TsdfMap(float fine_resolution, float truncation, int block_size = kDefaultBlockSize,
          const Eigen::Vector3f& origin = Eigen::Vector3f::Zero());

  float fine_resolution() const { return resolution_; }
  float truncation() const { return truncation_; }
  int block_size() const { return block_size_; }
  const Eigen::Vector3f& origin() const { return origin_; }
  std::size_t block_count() const { return block_coords_.size(); }

  /// Global fine-cell index containing p (lower-inclusive floor).
  CellIndex world_to_cell(const Eigen::Vector3d& p) const {
    return CellIndex(static_cast<int>(std::floor((p.x() - origin_d_.x()) / resolution_d_)),
                     static_cast<int>(std::floor((p.y() - origin_d_.y()) / resolution_d_)),
                     static_cast<int>(std::floor((p.z() - origin_d_.z()) / resolution_d_)));
  }
  GridIndex world_to_grid(const Eigen::Vector3d& p) const;
  GridIndex split(const CellIndex& cell) const {
    // Arithmetic shift floors negative indices, so the fine part stays in [0, block_size).
    const int mask = block_size_ - 1;
    return {CellIndex(cell.x() >> block_shift_, cell.y() >> block_shift_, cell.z() >> block_shift_),
            CellIndex(cell.x() & mask, cell.y() & mask, cell.z() & mask)};
  }
  Eigen::Vector3d cell_center(const CellIndex& cell) const;

  /// Stored value of a global fine cell, +truncation when unallocated.
  float cell_value(const CellIndex& cell) const {
    const GridIndex g = split(cell);
    const int slot = block_slot(g.coarse);
    if (slot < 0) return truncation_;
    return blocks_[static_cast<std::size_t>(slot)].values[static_cast<std::size_t>(local_offset(g.fine))];
  }
  bool is_allocated(const CellIndex& cell) const;

  /// Nearest-cell read.
  float lookup(const Eigen::Vector3d& p) const { return cell_value(world_to_cell(p)); }

  /// Trilinear interpolation over the 8 surrounding cell centers.
  double lookup_interpolated(const Eigen::Vector3d& p) const;

  /// Stores clamp(v, -truncation, truncation); allocates the block on demand.
  void set_cell(const CellIndex& cell, float v);

  /// Drops blocks whose cells all read |v| >= truncation. Returns blocks removed.
  std::size_t prune();

  /// Visits every allocated block as (coarse index, values).
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    for (std::size_t i = 0; i < block_coords_.size(); ++i) fn(block_coords_[i], blocks_[i]);
  }

  const FineBlock* find_block(const CellIndex& coarse) const;

  void serialize(std::ostream& out) const;
  static TsdfMap deserialize(std::istream& in);
  std::vector<char> to_bytes() const;
  static TsdfMap from_bytes(const std::vector<char>& bytes);
  void save(const std::string& path) const;
  static TsdfMap load(const std::string& path);

  friend bool operator==(const TsdfMap& a, const TsdfMap& b);

 private:
  int block_slot(const CellIndex& coarse) const {
    const CellIndex rel = coarse - coarse_lo_;
    if (static_cast<unsigned>(rel.x()) >= static_cast<unsigned>(coarse_dims_.x()) ||
        static_cast<unsigned>(rel.y()) >= static_cast<unsigned>(coarse_dims_.y()) ||
        static_cast<unsigned>(rel.z()) >= static_cast<unsigned>(coarse_dims_.z())) {
      return -1;
    }
    return coarse_table_[static_cast<std::size_t>(rel.x() + coarse_dims_.x() * (rel.y() + coarse_dims_.y() * rel.z()))];
  }
  FineBlock& allocate_block(const CellIndex& coarse);
  void rebuild_coarse_table(const CellIndex& lo, const CellIndex& hi);
  void rebuild_coarse_table();
  int local_offset(const CellIndex& fine) const {
    return fine.x() + block_size_ * (fine.y() + block_size_ * fine.z());
  }

  float resolution_;
  float truncation_;
  int block_size_;
  int block_shift_;
  Eigen::Vector3f origin_;
  double resolution_d_;
  Eigen::Vector3d origin_d_;

  std::vector<CellIndex> block_coords_;
  std::vector<FineBlock> blocks_;

  // Dense coarse level: slot index per block coordinate in [coarse_lo_, coarse_lo_ + coarse_dims_).
  CellIndex coarse_lo_{0, 0, 0};
  CellIndex coarse_dims_{0, 0, 0};
  std::vector<std::int32_t> coarse_table_;
};

}  // namespace tsdf_mcl
