#include "driftlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace driftlab {

std::uint64_t Rng::index(std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  // Box-Muller, one variate per call so the stream position never depends on
  // cached state.
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::lognormal_with_mean(double mean, double sigma) {
  const double mu = std::log(mean) - 0.5 * sigma * sigma;
  return std::exp(mu + sigma * normal());
}

std::uint64_t Rng::poisson(double mean) {
  if (mean <= 0.0) return 0;
  std::uint64_t total = 0;
  // Poisson(a + b) = Poisson(a) + Poisson(b); chunking keeps exp(-chunk) well
  // away from underflow.
  constexpr double kChunk = 16.0;
  while (mean > 0.0) {
    const double part = mean > kChunk ? kChunk : mean;
    mean -= part;
    const double limit = std::exp(-part);
    double prod = uniform_open_low();
    while (prod > limit) {
      ++total;
      prod *= uniform_open_low();
    }
  }
  return total;
}

std::uint64_t Rng::geometric_with_mean(double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  const double u = uniform_open_low();
  return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

}  // namespace driftlab
