#pragma once

// Seeded random streams for synthetic fixtures.
//
// The algorithm is fixed so fixtures can be regenerated bit-for-bit:
//   case seed  = mix(seed ^ mix(case_index))   (mix = SplitMix64 finalizer)
//   engine     = std::mt19937_64 seeded with the case seed
//   uniform01  = (engine() >> 11) * 2^-53                  in [0, 1)
//   uniform    = lo + (hi - lo) * uniform01
//   normal     = Box-Muller cosine branch, u1 = 1 - uniform01, u2 = uniform01,
//                two engine draws per normal, no caching
// The standard library distributions are not used because their output is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace stifle_tpa {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t case_seed(std::uint64_t seed, std::uint64_t case_index) noexcept {
  return splitmix64_mix(seed ^ splitmix64_mix(case_index));
}

class CaseRng {
 public:
  explicit CaseRng(std::uint64_t seed) : engine_(seed) {}

  CaseRng(std::uint64_t seed, std::uint64_t case_index) : engine_(case_seed(seed, case_index)) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stifle_tpa
