#pragma once

#include <cstdint>
#include <limits>

namespace nvmap {

/// splitmix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator. The n-th output is a pure function of
/// (seed, stream, substream, n), so any draw can be reproduced without
/// replaying earlier ones and parallel partitioning never changes results.
///
/// Satisfies UniformRandomBitGenerator, so it can drive <random>
/// distributions directly.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream,
             std::uint64_t substream) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream tags keep the draws for different purposes independent.
namespace streams {
inline constexpr std::uint64_t kNodeSampling = 0x6e6f6465ULL;        // "node"
inline constexpr std::uint64_t kShotNoise = 0x73686f74ULL << 32;     // "shot"
inline constexpr std::uint64_t kRenoise = 0x72656e6fULL << 32;       // "reno"
inline constexpr std::uint64_t kSplit = 0x73706c74ULL;               // "splt"
}  // namespace streams

}  // namespace nvmap
