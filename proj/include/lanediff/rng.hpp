#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lanediff {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so results do not depend on evaluation order or
/// thread scheduling. Mixing is SplitMix64's finalizer.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(mix(seed) ^ (stream * kGolden + 0x632be59bd9b4e019ULL))) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits_at(std::uint64_t counter) const { return mix(key_ ^ mix(counter)); }

  /// Uniform in [0,1).
  double uniform_at(std::uint64_t counter) const { return static_cast<double>(bits_at(counter) >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller on counters 2i and 2i+1.
  double normal_at(std::uint64_t i) const {
    const double u1 = 1.0 - uniform_at(2 * i);  // (0,1]
    const double u2 = uniform_at(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Sequential interface over the same counter space.
  std::uint64_t next_bits() { return bits_at(counter_++); }
  double uniform() { return uniform_at(counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(next_bits() % span);
  }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lanediff
