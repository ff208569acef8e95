#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "regmcts/simplex.hpp"

namespace regmcts {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for the work item identified by `parts` under a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
  return h;
}

/// mt19937_64 plus the few draws the library needs. std::mt19937_64 output
/// is fixed by the standard, and the conversions below avoid the
/// implementation-defined distribution classes, so streams are reproducible
/// across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  /// Inverse-CDF draw from a distribution.
  std::size_t sample(const ActionDistribution& p) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (p[a] > 0.0) last_positive = a;
      acc += p[a];
      if (u < acc) return a;
    }
    return last_positive;  // rounding left u above the accumulated mass
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace regmcts
