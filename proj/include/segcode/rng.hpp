#pragma once

#include <cstdint>

namespace segcode {

// SplitMix64 (Steele, Lea, Doig 2014). One 64-bit word of state, full-period,
// and trivially reproducible across platforms. Every random draw in this
// project flows through this generator so that a fixed seed pins the whole
// pipeline: frame sub-sampling, parameter init, data generation, shuffles.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) using the top 53 bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] inclusive via modulo reduction. The modulo
  // bias is below 2^-53 for the range sizes used here and the reduction is
  // identical on every platform, which is what the determinism contract needs.
  std::uint64_t next_in(std::uint64_t lo, std::uint64_t hi) {
    return lo + next() % (hi - lo + 1);
  }

  // Uniform double in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

 private:
  std::uint64_t state_;
};

// SplitMix64 finalizer as a standalone hash.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed and a salt (clip index,
// parameter ordinal, epoch number). Documented so other implementations can
// reproduce the exact same streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return mix64(base ^ (0x9E3779B97F4A7C15ull * (salt + 1)));
}

}  // namespace segcode
