#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sbanm {

using Rng = std::mt19937_64;

/// Derives an independent sub-stream seed from a master seed, a purpose tag
/// and an index (FNV-1a over the tag, mixed with splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

}  // namespace sbanm
