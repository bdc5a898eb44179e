#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace frodolab {

// All randomness flows through mt19937_64 (sequence pinned by the standard)
// and these helpers, never through std distributions whose draw counts are
// implementation-defined. Keeps runs bit-reproducible across toolchains.

inline double unit_uniform(std::mt19937_64& rng) {  // [0, 1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  // inclusive range; rejection sampling for an unbiased draw
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return lo + static_cast<int64_t>(r % span);
}

// Standard normal truncated to [-2, 2] via Box-Muller with rejection.
inline double truncated_normal(std::mt19937_64& rng) {
  while (true) {
    double u1 = 1.0 - unit_uniform(rng);  // (0, 1]
    double u2 = unit_uniform(rng);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    if (std::abs(z) <= 2.0) return z;
  }
}

}  // namespace frodolab
