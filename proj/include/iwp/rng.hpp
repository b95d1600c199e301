/**
 * @file rng.hpp
 * @brief Counter-based SplitMix64 stream and the samplers built on it.
 *
 * Output k of a stream with key `seed` is splitmix64_mix(seed + (k+1)*golden),
 * i.e. the k-th output of the reference SplitMix64 generator seeded with
 * `seed`. Draws are pure functions of (seed, counter), so results do not
 * depend on the standard library's distribution implementations.
 *
 * Poisson variates: inverse transform for mean < 30, Hoermann's PTRD
 * transformed rejection otherwise.
 */

#pragma once

#include <cstdint>

namespace iwp {

std::uint64_t splitmix64_mix(std::uint64_t z);

/// Independent sub-stream key for (seed, stream index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits.
  double uniform();
  /// Standard normal (Box-Muller, both branches used).
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  std::uint64_t poisson(double mean);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace iwp
