#pragma once

#include <cstdint>
#include <random>

namespace driftlab {

/// Stable 64-bit mixing function (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based substream seed: independent, reproducible streams keyed by
/// (master seed, stream id, index).
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream,
                                       std::uint64_t index) noexcept {
  return mix64(mix64(master ^ mix64(stream)) + index);
}

/// Seeded generator whose draws are bit-reproducible across standard library
/// implementations. std::mt19937_64's output sequence is fixed by the
/// standard; the std:: distributions are not, so the samplers live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  double normal();
  /// Log-normal with the given arithmetic mean and log-space sigma.
  double lognormal_with_mean(double mean, double sigma);
  /// Poisson count; exact multiplication method for small means, sum of
  /// unit-mean chunks above that so it stays exact and reproducible.
  std::uint64_t poisson(double mean);
  /// Geometric on {1, 2, ...} with the given mean (>= 1).
  std::uint64_t geometric_with_mean(double mean);

 private:
  std::mt19937_64 engine_;
};

}  // namespace driftlab
