#include "driftlab/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "driftlab/error.hpp"

namespace driftlab {

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "mean of empty sequence");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

double sample_stddev(std::span<const double> values) { return std::sqrt(sample_variance(values)); }

double quantile_type7_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "quantile of empty sequence");
  prob = std::clamp(prob, 0.0, 1.0);
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile_type7(std::span<const double> values, double prob) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_type7_sorted(sorted, prob);
}

double shannon_entropy_bits(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    h -= p * std::log2(p);
  }
  // -0.0 for a single-outcome distribution
  return h <= 0.0 ? 0.0 : h;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty()) {
    throw Error(ErrorCode::DimensionMismatch,
                "vectors of dimension " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero-norm vector");
  const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = std::abs(value) * scale;
  // Nudge by a few ulps so values like 2.675 stored as 2.67499999 still round up.
  const double rounded = std::floor(scaled + 0.5 + scaled * 1e-12) / scale;
  return value < 0.0 ? -rounded : rounded;
}

}  // namespace driftlab
