#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tagfog {

using Rng = std::mt19937_64;

// Deterministically derives an independent seed for a named substream.
// All randomness in a run flows from one base seed through these streams.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index);

inline Rng make_rng(std::uint64_t base, std::string_view stream) {
  return Rng{derive_seed(base, stream)};
}

}  // namespace tagfog
