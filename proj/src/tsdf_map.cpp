#include "tsdf_mcl/tsdf_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tsdf_mcl {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'D', 'F'};
constexpr std::uint8_t kFormatVersion = 1;
constexpr int kCoarseGrowthMargin = 2;

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt get_le(std::istream& in) {
  unsigned char bytes[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) {
    throw MapFormatError("truncated map payload");
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_i32(std::ostream& out, std::int32_t v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
std::int32_t get_i32(std::istream& in) { return std::bit_cast<std::int32_t>(get_le<std::uint32_t>(in)); }

bool coarse_less(const CellIndex& a, const CellIndex& b) {
  return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

}  // namespace

TsdfMap::TsdfMap(float fine_resolution, float truncation, int block_size, const Eigen::Vector3f& origin)
    : resolution_(fine_resolution),
      truncation_(truncation),
      block_size_(block_size),
      block_shift_(0),
      origin_(origin),
      resolution_d_(fine_resolution),
      origin_d_(origin.cast<double>()) {
  if (!(fine_resolution > 0.0f)) throw std::invalid_argument("fine_resolution must be positive");
  if (!(truncation >= fine_resolution)) {
    throw std::invalid_argument("truncation must be at least fine_resolution");
  }
  if (block_size < 1 || !std::has_single_bit(static_cast<unsigned>(block_size))) {
    throw std::invalid_argument("block_size must be a power of two");
  }
  block_shift_ = std::countr_zero(static_cast<unsigned>(block_size));
}

GridIndex TsdfMap::world_to_grid(const Eigen::Vector3d& p) const { return split(world_to_cell(p)); }

Eigen::Vector3d TsdfMap::cell_center(const CellIndex& cell) const {
  return origin_.cast<double>() +
         (cell.cast<double>().array() + 0.5).matrix() * static_cast<double>(resolution_);
}

const FineBlock* TsdfMap::find_block(const CellIndex& coarse) const {
  const int slot = block_slot(coarse);
  return slot < 0 ? nullptr : &blocks_[slot];
}

bool TsdfMap::is_allocated(const CellIndex& cell) const { return block_slot(split(cell).coarse) >= 0; }

double TsdfMap::lookup_interpolated(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d u =
      ((p - origin_.cast<double>()) / static_cast<double>(resolution_)).array() - 0.5;
  const Eigen::Vector3d base = u.array().floor();
  const Eigen::Vector3d f = u - base;
  const CellIndex c0 = base.cast<int>();

  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    const int dx = corner & 1, dy = (corner >> 1) & 1, dz = (corner >> 2) & 1;
    const double w = (dx ? f.x() : 1.0 - f.x()) * (dy ? f.y() : 1.0 - f.y()) *
                     (dz ? f.z() : 1.0 - f.z());
    if (w == 0.0) continue;
    acc += w * cell_value(c0 + CellIndex(dx, dy, dz));
  }
  return std::clamp(acc, -static_cast<double>(truncation_), static_cast<double>(truncation_));
}

void TsdfMap::rebuild_coarse_table(const CellIndex& lo, const CellIndex& hi) {
  coarse_lo_ = lo;
  coarse_dims_ = (hi - lo).array() + 1;
  coarse_table_.assign(static_cast<std::size_t>(coarse_dims_.prod()), -1);
  for (std::size_t i = 0; i < block_coords_.size(); ++i) {
    const CellIndex rel = block_coords_[i] - coarse_lo_;
    coarse_table_[rel.x() + coarse_dims_.x() * (rel.y() + coarse_dims_.y() * rel.z())] =
        static_cast<std::int32_t>(i);
  }
}

void TsdfMap::rebuild_coarse_table() {
  if (block_coords_.empty()) {
    coarse_lo_.setZero();
    coarse_dims_.setZero();
    coarse_table_.clear();
    return;
  }
  CellIndex lo = block_coords_.front(), hi = block_coords_.front();
  for (const auto& c : block_coords_) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  rebuild_coarse_table(lo, hi);
}

FineBlock& TsdfMap::allocate_block(const CellIndex& coarse) {
  block_coords_.push_back(coarse);
  blocks_.push_back(FineBlock{std::vector<float>(
      static_cast<std::size_t>(block_size_) * block_size_ * block_size_, truncation_)});

  const CellIndex rel = coarse - coarse_lo_;
  const bool inside = coarse_dims_.minCoeff() > 0 && (rel.array() >= 0).all() &&
                      (rel.array() < coarse_dims_.array()).all();
  if (inside) {
    coarse_table_[rel.x() + coarse_dims_.x() * (rel.y() + coarse_dims_.y() * rel.z())] =
        static_cast<std::int32_t>(blocks_.size() - 1);
  } else if (block_coords_.size() == 1) {
    rebuild_coarse_table(coarse.array() - kCoarseGrowthMargin, coarse.array() + kCoarseGrowthMargin);
  } else {
    const CellIndex hi = coarse_lo_ + coarse_dims_ - CellIndex::Ones();
    rebuild_coarse_table(coarse_lo_.cwiseMin(coarse).array() - kCoarseGrowthMargin,
                         hi.cwiseMax(coarse).array() + kCoarseGrowthMargin);
  }
  return blocks_.back();
}

void TsdfMap::set_cell(const CellIndex& cell, float v) {
  const GridIndex g = split(cell);
  const int slot = block_slot(g.coarse);
  FineBlock& block = slot < 0 ? allocate_block(g.coarse) : blocks_[slot];
  block.values[local_offset(g.fine)] = std::clamp(v, -truncation_, truncation_);
}

std::size_t TsdfMap::prune() {
  std::vector<CellIndex> kept_coords;
  std::vector<FineBlock> kept_blocks;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& values = blocks_[i].values;
    const bool informative = std::any_of(values.begin(), values.end(), [this](float v) {
      return std::abs(v) < truncation_;
    });
    if (informative) {
      kept_coords.push_back(block_coords_[i]);
      kept_blocks.push_back(std::move(blocks_[i]));
    }
  }
  const std::size_t removed = blocks_.size() - kept_blocks.size();
  block_coords_ = std::move(kept_coords);
  blocks_ = std::move(kept_blocks);
  rebuild_coarse_table();
  return removed;
}

void TsdfMap::serialize(std::ostream& out) const {
  out.write(kMagic, 4);
  put_le<std::uint8_t>(out, kFormatVersion);
  put_f32(out, resolution_);
  put_f32(out, truncation_);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(block_size_));
  for (int i = 0; i < 3; ++i) put_f32(out, origin_[i]);
  put_le<std::uint64_t>(out, block_coords_.size());

  std::vector<std::size_t> order(block_coords_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return coarse_less(block_coords_[a], block_coords_[b]);
  });
  for (const std::size_t i : order) {
    for (int k = 0; k < 3; ++k) put_i32(out, block_coords_[i][k]);
    for (const float v : blocks_[i].values) put_f32(out, v);
  }
}

TsdfMap TsdfMap::deserialize(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw MapFormatError("truncated map payload");
  if (!std::equal(magic, magic + 4, kMagic)) throw MapFormatError("bad magic, not a TSDF map");
  const auto version = get_le<std::uint8_t>(in);
  if (version != kFormatVersion) {
    throw MapFormatError("unsupported map format version " + std::to_string(version));
  }
  const float resolution = get_f32(in);
  const float truncation = get_f32(in);
  const auto block_size = get_le<std::uint32_t>(in);
  Eigen::Vector3f origin;
  for (int i = 0; i < 3; ++i) origin[i] = get_f32(in);
  const auto count = get_le<std::uint64_t>(in);

  if (block_size == 0 || block_size > 1024 || !std::has_single_bit(block_size)) {
    throw MapFormatError("invalid block size");
  }
  TsdfMap map = [&] {
    try {
      return TsdfMap(resolution, truncation, static_cast<int>(block_size), origin);
    } catch (const std::invalid_argument& e) {
      throw MapFormatError(std::string("invalid map header: ") + e.what());
    }
  }();

  const std::size_t cells = static_cast<std::size_t>(block_size) * block_size * block_size;
  for (std::uint64_t b = 0; b < count; ++b) {
    CellIndex coarse;
    for (int k = 0; k < 3; ++k) coarse[k] = get_i32(in);
    if (map.block_slot(coarse) >= 0) throw MapFormatError("duplicate block index");
    FineBlock& block = map.allocate_block(coarse);
    for (std::size_t i = 0; i < cells; ++i) block.values[i] = get_f32(in);
  }
  return map;
}

std::vector<char> TsdfMap::to_bytes() const {
  std::ostringstream out(std::ios::binary);
  serialize(out);
  const std::string s = out.str();
  return {s.begin(), s.end()};
}

TsdfMap TsdfMap::from_bytes(const std::vector<char>& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return deserialize(in);
}

void TsdfMap::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write map file " + path);
  serialize(out);
}

TsdfMap TsdfMap::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map file " + path);
  return deserialize(in);
}

bool operator==(const TsdfMap& a, const TsdfMap& b) {
  if (a.resolution_ != b.resolution_ || a.truncation_ != b.truncation_ ||
      a.block_size_ != b.block_size_ || a.origin_ != b.origin_ ||
      a.block_count() != b.block_count()) {
    return false;
  }
  for (std::size_t i = 0; i < a.block_coords_.size(); ++i) {
    const FineBlock* other = b.find_block(a.block_coords_[i]);
    if (other == nullptr || other->values != a.blocks_[i].values) return false;
  }
  return true;
}

}  // namespace tsdf_mcl
