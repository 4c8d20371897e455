#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rangedepth {

/// Counter-based generator: draw k of stream `seed` is a pure function of
/// (seed, k), built from the SplitMix64 finaliser. Integer arithmetic only up
/// to the final conversion, so the uniform stream is identical on every
/// platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(mix(seed ^ mix(stream + 0x6a09e667f3bcc909ULL))) {}

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  [[nodiscard]] std::uint64_t bits_at(std::uint64_t counter) const {
    return mix(seed_ + counter * 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t next_bits() { return bits_at(counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by rejection, n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_bits();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace rangedepth
