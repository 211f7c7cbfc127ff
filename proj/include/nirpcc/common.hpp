#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace nirpcc {

/// Integer grid coordinate, one component per axis.
using Voxel = std::array<int32_t, 3>;
/// RGB triple, 0-255 per channel.
using Color = std::array<uint8_t, 3>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: malformed file, undecodable stream, out-of-range option.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Broken internal expectation: shape mismatch, diverged training, bug.
class InternalError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Morton (z-order) codes, up to 21 bits per axis.

namespace detail {
inline uint64_t spread_bits3(uint64_t v) {
  v &= 0x1FFFFF;
  v = (v | v << 32) & 0x1F00000000FFFFull;
  v = (v | v << 16) & 0x1F0000FF0000FFull;
  v = (v | v << 8) & 0x100F00F00F00F00Full;
  v = (v | v << 4) & 0x10C30C30C30C30C3ull;
  v = (v | v << 2) & 0x1249249249249249ull;
  return v;
}

inline uint64_t compact_bits3(uint64_t v) {
  v &= 0x1249249249249249ull;
  v = (v ^ (v >> 2)) & 0x10C30C30C30C30C3ull;
  v = (v ^ (v >> 4)) & 0x100F00F00F00F00Full;
  v = (v ^ (v >> 8)) & 0x1F0000FF0000FFull;
  v = (v ^ (v >> 16)) & 0x1F00000000FFFFull;
  v = (v ^ (v >> 32)) & 0x1FFFFF;
  return v;
}
}  // namespace detail

inline uint64_t morton_encode(const Voxel& v) {
  return detail::spread_bits3(static_cast<uint32_t>(v[0])) |
         detail::spread_bits3(static_cast<uint32_t>(v[1])) << 1 |
         detail::spread_bits3(static_cast<uint32_t>(v[2])) << 2;
}

inline Voxel morton_decode(uint64_t code) {
  return {static_cast<int32_t>(detail::compact_bits3(code)),
          static_cast<int32_t>(detail::compact_bits3(code >> 1)),
          static_cast<int32_t>(detail::compact_bits3(code >> 2))};
}

/// Packs a voxel into a single key for hashing. Components must be < 2^21.
inline uint64_t voxel_key(const Voxel& v) {
  return static_cast<uint64_t>(static_cast<uint32_t>(v[0])) |
         static_cast<uint64_t>(static_cast<uint32_t>(v[1])) << 21 |
         static_cast<uint64_t>(static_cast<uint32_t>(v[2])) << 42;
}

// ---------------------------------------------------------------------------
// Deterministic randomness. mt19937_64 is fully specified by the standard;
// the derived draws below avoid std::uniform_*_distribution, whose output
// is implementation-defined.

class Prng {
 public:
  explicit Prng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound), bound >= 1. Unbiased via rejection.
  uint64_t next_below(uint64_t bound) {
    const uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double next_real(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

 private:
  std::mt19937_64 engine_;
};

/// Derives independent stream seeds from a master seed (splitmix64 sequence).
inline uint64_t split_seed(uint64_t seed, unsigned stream) {
  uint64_t state = seed;
  for (unsigned i = 0; i <= stream; ++i) {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    if (i == stream) return z ^ (z >> 31);
  }
  return 0;  // unreachable
}

}  // namespace nirpcc
