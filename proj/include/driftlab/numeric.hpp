#pragma once

#include <span>
#include <vector>

namespace driftlab {

double mean(std::span<const double> values);

/// Unbiased (n - 1) sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> values);
double sample_stddev(std::span<const double> values);

/// Quantile by linear interpolation between order statistics ("type 7").
/// `prob` in [0, 1]. Throws EmptyInput on an empty sequence.
double quantile_type7(std::span<const double> values, double prob);
double quantile_type7_sorted(std::span<const double> sorted, double prob);

/// Shannon entropy in bits of a non-negative count (or weight) vector,
/// normalized to sum 1. Zero entries contribute nothing; an all-zero vector
/// has entropy 0.
double shannon_entropy_bits(std::span<const double> counts);

/// Cosine of the angle between u and v.
/// Throws DimensionMismatch (unequal or zero length) or ZeroVector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Half-up (away from zero at .5) rounding to a fixed number of decimals.
double round_half_up(double value, int decimals);

}  // namespace driftlab
