#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "driftlab/sim_harness.hpp"
#include "driftlab/stance_dynamics.hpp"
#include "driftlab/stats_compare.hpp"
#include "driftlab/trace_model.hpp"

namespace driftlab {

/// On-the-fly conditions (C0, C1, C2) and prefill conditions (C0P, B, NB)
/// are analysed as separate families, each against its own baseline.
enum class Family { OnTheFly, Prefill };
std::string_view to_string(Family f) noexcept;
Family family_of(Condition c) noexcept;

namespace files {
inline constexpr std::string_view kTrials = "trials.csv";
inline constexpr std::string_view kStance = "stance.csv";
inline constexpr std::string_view kCoding = "coding_metrics.csv";
inline constexpr std::string_view kWeb = "web_metrics.csv";
inline constexpr std::string_view kFlags = "metric_flags.csv";
inline constexpr std::string_view kIrrelevance = "irrelevance.json";
inline constexpr std::string_view kConstructScores = "construct_scores.csv";
inline constexpr std::string_view kLoadings = "loadings.json";
inline constexpr std::string_view kOutcomesCsv = "outcomes.csv";
inline constexpr std::string_view kOutcomesJson = "outcomes.json";
inline constexpr std::string_view kComparisonsJson = "comparisons.json";
inline constexpr std::string_view kComparisonsCsv = "comparisons.csv";
inline constexpr std::string_view kConsistencyCsv = "consistency.csv";
inline constexpr std::string_view kReportMd = "report.md";
inline constexpr std::string_view kReportJson = "report.json";
inline constexpr std::string_view kHeadline = "headline.txt";
std::string reference_profiles(Family f);
}  // namespace files

struct RunOptions {
  std::filesystem::path traces;
  std::filesystem::path out = "driftlab_out";
  std::uint64_t seed = 0;
  std::size_t resamples = 10000;
  Condition baseline = Condition::C1;  // on-the-fly reference; prefill always uses C0P
  std::vector<GroupKey> group_by = {GroupKey::Backbone, GroupKey::Tactic};
  std::vector<std::string> formats = {"csv", "md", "json"};
  unsigned workers = 1;

  bool wants(std::string_view format) const;
};

/// Reference condition of a family. Throws UsageError for a baseline that
/// does not belong to the on-the-fly family (C0P is accepted and ignored).
Condition baseline_condition(Family f, const RunOptions& options);

/// Comma lists from the command line. Throw UsageError.
std::vector<std::string> parse_formats(std::string_view list);
std::vector<GroupKey> parse_group_by(std::string_view list);

// ---- validate ----

struct ValidateReport {
  std::size_t trials_loaded = 0;
  std::vector<Violation> violations;
  std::vector<std::string> rejected_trial_ids;
};

ValidateReport run_validate(const std::filesystem::path& traces);
std::string render_validate(const ValidateReport& report);

// ---- simulate ----

void run_simulate(const SimConfig& config, const std::filesystem::path& out, unsigned workers = 1);

// ---- metrics / aggregate ----

struct MetricsSummary {
  std::size_t trials = 0;
  std::size_t coding_trials = 0;
  std::size_t web_trials = 0;
  std::size_t flagged = 0;
  std::size_t rejected = 0;
};

/// Parses the traces and writes per-trial metadata, stance, coding and web
/// metric files into `options.out`.
MetricsSummary run_metrics(const RunOptions& options);

/// Construct PCA per (backbone, family) and the outcome table. Reads the
/// metrics stage files; throws MissingUpstream.
void run_aggregate(const RunOptions& options);

// ---- compare ----

struct ComparisonRecord {
  std::string family;
  std::string backbone;
  std::string task;
  std::string comparison;  // "P-NP", "B-C0P", "NB-C0P", "B-NB"
  std::string metric;
  double raw_mean_a = 0.0;
  double raw_mean_b = 0.0;
  std::uint64_t seed = 0;  // resampling seed handed to compare()
  ComparisonResult result;
};

struct SkippedComparison {
  std::string family;
  std::string backbone;
  std::string task;
  std::string comparison;
  std::string metric;
  std::string reason;
};

struct ConsistencyRecord {
  std::string backbone;
  std::string task;
  std::string condition;
  std::string score;
  ConsistencySummary summary;
};

struct CompareOutput {
  std::uint64_t seed = 0;
  std::size_t resamples = 0;
  std::vector<ComparisonRecord> comparisons;
  std::vector<SkippedComparison> skipped;
  std::vector<ConsistencyRecord> consistency;
};

/// Reads metrics and aggregate outputs, writes comparisons.json/csv and
/// consistency.csv. Throws MissingUpstream.
CompareOutput run_compare(const RunOptions& options);

std::string compare_output_json(const CompareOutput& output);
CompareOutput parse_compare_output_json(std::string_view text);
std::string comparisons_csv(std::span<const ComparisonRecord> records);

// ---- report ----

/// One stanza per (backbone, task) holding B-vs-C0P rows for num_searches
/// and num_unique_urls: a "<backbone> <task>" line, then
/// "searches: -26.9%, unique URLs: -16.9%".
std::vector<std::string> headline_lines(std::span<const ComparisonRecord> records);

/// Renders every table from comparisons.json (required) and outcomes.json
/// (optional). Throws MissingUpstream.
void run_report(const RunOptions& options);

}  // namespace driftlab
