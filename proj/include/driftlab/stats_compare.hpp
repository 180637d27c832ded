#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace driftlab {

struct CompareOptions {
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  /// Enumerate every split when C(n_a + n_b, n_a) is at most this.
  std::size_t exhaustive_limit = 20000;
  /// Threads for the resampling loops; results do not depend on it.
  unsigned workers = 1;
  bool welch = true;
};

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

struct ComparisonResult {
  double delta_mean = 0.0;  // mean(a) - mean(b)
  double mean_a = 0.0;
  double mean_b = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double se = 0.0;  // sqrt(var_a / n_a + var_b / n_b)
  std::optional<double> iqr_persona;
  std::size_t n_personas = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  bool exhaustive = false;
  std::size_t permutations = 0;  // splits enumerated or sampled
  bool degenerate = false;       // every value identical, p fixed at 1
  std::optional<WelchResult> welch;
};

/// Two-sided permutation test of the mean difference, percentile bootstrap
/// CI, and the interquartile range of per-persona mean differences (personas
/// present in both groups). Persona spans may be empty, otherwise they must
/// match the value spans in length. Throws TooFewTrials (fewer than two
/// values in a group) or DimensionMismatch.
ComparisonResult compare(std::span<const double> a, std::span<const double> b,
                         std::span<const std::string> personas_a, std::span<const std::string> personas_b,
                         const CompareOptions& options = {});

inline ComparisonResult compare(std::span<const double> a, std::span<const double> b,
                                const CompareOptions& options = {}) {
  return compare(a, b, {}, {}, options);
}

/// Exhaustive two-sided permutation p-value; used by compare() below the limit.
double exhaustive_permutation_p(std::span<const double> a, std::span<const double> b);

/// Welch's unequal-variance t-test. nullopt when both variances are zero.
std::optional<WelchResult> welch_t_test(std::span<const double> a, std::span<const double> b);

struct ConsistencyCell {
  std::string key;
  std::vector<double> values;  // signed change per repeated run
};

struct ConsistencyResult {
  std::string key;
  double consistency = 1.0;
  std::size_t n_runs = 0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t n_zero = 0;
  bool all_zero = false;
};

struct ConsistencySummary {
  std::vector<ConsistencyResult> cells;
  std::vector<std::string> skipped;  // cells with fewer than two runs
  std::optional<double> mean;
  std::optional<double> stddev;  // sample; needs two cells
};

/// Majority-sign fraction per cell, exact zeros excluded.
ConsistencyResult cell_consistency(const ConsistencyCell& cell);
ConsistencySummary consistency(std::span<const ConsistencyCell> cells);

/// 100 * (value - reference) / reference. Throws ZeroReference.
double percent_change(double value, double reference);

}  // namespace driftlab
