#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pickorder {

/// SplitMix64 counter-based generator.
///
/// State update: counter <- counter + 0x9E3779B97F4A7C15 (mod 2^64).
/// Output: the SplitMix64 finalizer applied to the new counter.
/// Because the k-th output depends only on (key, k), every stream is
/// reproducible bit-for-bit on any platform; no std distributions are used.
class Rng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : counter_(mix(seed ^ mix(stream * kGamma + 0x632BE59BD9B4E019ULL))) {}

  std::uint64_t next_u64() noexcept {
    counter_ += kGamma;
    return mix(counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); rejection removes modulo bias. n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller (one draw consumed per pair of uniforms).
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) noexcept { return mean + sigma * normal(); }

 private:
  std::uint64_t counter_;
};

/// Derives a child seed from a parent seed and a tag; used for per-scene streams.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return Rng::mix(seed + Rng::kGamma * (tag + 1));
}

}  // namespace pickorder
