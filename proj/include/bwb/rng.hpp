#pragma once

#include <cstdint>
#include <random>

namespace bwb {

/// Independent generator for stream `index` under a run seed. Used wherever
/// results must not depend on scheduling order (sampling chains, conditions).
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace bwb
