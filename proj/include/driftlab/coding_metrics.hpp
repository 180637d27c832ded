#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "driftlab/trace_model.hpp"

namespace driftlab {

/// Raw process measures of one coding trial.
struct CodingRaw {
  double cd = 0.0;       // seconds inside revision -> execution spans
  double td = 0.0;       // TaskEnd.t - TaskStart.t
  std::size_t nr = 0;    // CodeRevision events
  double re = 0.0;       // entropy (bits) of the lines_changed distribution
  double ms = 0.0;       // mean lines_changed
};

enum class CodingMetric { CD, TD, NR, RE, MS };
inline constexpr std::array<CodingMetric, 5> kCodingMetrics = {CodingMetric::CD, CodingMetric::TD, CodingMetric::NR,
                                                              CodingMetric::RE, CodingMetric::MS};

std::string_view to_string(CodingMetric m) noexcept;
double metric_value(const CodingRaw& raw, CodingMetric m) noexcept;

/// Throws InvalidTrial (wrong task type), MissingTaskBoundary, or
/// NoCodeActivity (no CodeExec events).
///
/// A CodeExec closes the span opened by the most recent CodeRevision; an
/// execution with no open span adds nothing to cd.
CodingRaw extract_coding_raw(const TrialRecord& trial);

struct PersonaBaseline {
  std::string persona;
  std::string metric;
  double mu = 0.0;
  std::size_t n_baseline = 0;
};

/// Per-(persona, metric) means over baseline trials.
class BaselineTable {
 public:
  void add(const std::string& persona, const std::string& metric, double value);
  bool contains(const std::string& persona, const std::string& metric) const;
  /// Throws MissingBaseline.
  PersonaBaseline at(const std::string& persona, const std::string& metric) const;
  std::vector<PersonaBaseline> entries() const;

 private:
  struct Accumulator {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, std::string>, Accumulator> acc_;
};

/// value - mu.
double persona_delta(double value, const PersonaBaseline& baseline);

/// q_i = (1/N) * #{j : d_j <= d_i}. Ties share the larger count.
/// Throws EmptyInput or NonFinite.
std::vector<double> percentile_ranks(std::span<const double> deltas);

struct CodingRanks {
  std::optional<double> cd, td, nr, re, ms;
};

struct CompositeScores {
  double trs = 0.0;
  double evs = 0.0;
};

/// trs = 1 - mean(q_cd, q_td, q_nr); evs = (q_re + (1 - q_ms)) / 2.
/// Throws MissingRank naming the first absent metric.
CompositeScores composite_scores(const CodingRanks& ranks);

struct CodingTrialInput {
  std::string trial_id;
  std::string persona;
  bool is_baseline = false;
  CodingRaw raw;
};

struct CodingScores {
  std::string trial_id;
  std::string persona;
  bool is_baseline = false;
  CodingRaw raw;
  std::array<std::optional<double>, 5> deltas;  // indexed like kCodingMetrics
  std::array<std::optional<double>, 5> ranks;
  std::optional<double> inverted_ms_rank;
  std::optional<double> trs;
  std::optional<double> evs;
};

struct CodingStratumResult {
  std::vector<CodingScores> rows;            // input order
  std::vector<PersonaBaseline> baselines;
  std::vector<std::string> missing_baseline;  // non-baseline trials left unscored
};

/// Full scoring of one (backbone, task) stratum: persona baselines from the
/// baseline trials, deltas for everyone, ranks and composites over the
/// non-baseline trials only.
CodingStratumResult score_coding_stratum(std::span<const CodingTrialInput> trials);

/// trial_id, cd, td, nr, re, ms, d_*, q_*, trs, evs
std::string coding_scores_csv(std::span<const CodingScores> rows);

}  // namespace driftlab
