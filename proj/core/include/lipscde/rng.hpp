#pragma once

#include <cstdint>

namespace lipscde {

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream tag, counters), so any value can be regenerated in any order:
// the same key always produces the same number regardless of which other
// draws happened first. This is what makes solver paths, simulator records
// and training runs bit-reproducible.

enum class Stream : uint64_t {
  kBrownian = 0x11,
  kSimInit = 0x21,
  kSimConfounder = 0x22,
  kSimCovariate = 0x23,
  kSimTreatment = 0x24,
  kSimOutcome = 0x25,
  kMissingness = 0x31,
  kShuffle = 0x41,
  kSdeSample = 0x51,
  kParamInit = 0x61,
  kTest = 0x71,
  kGrid = 0x81,
};

namespace detail {
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

inline uint64_t rng_u64(uint64_t seed, Stream stream, uint64_t a = 0,
                        uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = detail::mix64(seed ^ 0xA0761D6478BD642Ful);
  h = detail::mix64(h ^ static_cast<uint64_t>(stream));
  h = detail::mix64(h ^ a);
  h = detail::mix64(h ^ b);
  h = detail::mix64(h ^ c);
  return h;
}

/// Uniform in [2^-64, 1 - 2^-53]; never returns exactly 0 or 1.
inline double rng_uniform(uint64_t seed, Stream stream, uint64_t a = 0,
                          uint64_t b = 0, uint64_t c = 0) {
  uint64_t v = rng_u64(seed, stream, a, b, c);
  double u = (double(v >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  return u;
}

/// Inverse CDF of the standard normal (Acklam's rational approximation,
/// absolute error below 1.2e-9 which is far inside every tolerance used here).
double normal_inv_cdf(double p);

/// Standard normal draw keyed by (seed, stream, counters).
inline double rng_normal(uint64_t seed, Stream stream, uint64_t a = 0,
                         uint64_t b = 0, uint64_t c = 0) {
  return normal_inv_cdf(rng_uniform(seed, stream, a, b, c));
}

}  // namespace lipscde
