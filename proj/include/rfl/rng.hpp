#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <utility>

namespace rfl {

/// Counter-based pseudo-random stream (splitmix64 over key + counter).
///
/// Streams are derived from a seed plus an arbitrary list of tags, so every
/// (run, purpose, client, epoch) combination gets an independent,
/// reproducible sequence regardless of how many draws other streams made.
/// Output is bit-stable across standard libraries: all distributions are
/// derived from raw 64-bit draws, never from std::*_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed + kGamma)) {}

  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) : Rng(seed) {
    for (std::uint64_t t : tags) key_ = mix(key_ ^ mix(t + kGamma));
  }

  /// Derives an independent substream identified by `tag`.
  Rng fork(std::uint64_t tag) const {
    Rng child(0);
    child.key_ = mix(key_ ^ mix(tag + kGamma));
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform double in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller on two raw uniforms.
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Laplace(0, scale) via inverse CDF. Variance is 2*scale^2.
  double laplace(double scale) {
    double u = uniform() - 0.5;
    double s = u < 0 ? -1.0 : 1.0;
    return -scale * s * std::log(1.0 - 2.0 * std::abs(u));
  }

  /// Uniform integer in [0, n).  n must be positive.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Fisher-Yates shuffle.
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rfl
