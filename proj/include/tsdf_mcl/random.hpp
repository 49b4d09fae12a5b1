#pragma once

#include <cstdint>
#include <random>

namespace tsdf_mcl {

/// SplitMix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Independent stream for (seed, stream index), e.g. one per particle.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632BE59BD9B4E019ull)));
}

}  // namespace tsdf_mcl
