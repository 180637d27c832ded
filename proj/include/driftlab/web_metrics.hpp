#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "driftlab/coding_metrics.hpp"
#include "driftlab/trace_model.hpp"

namespace driftlab {

struct WebRaw {
  std::size_t num_web_events = 0;  // Search + Visit + Summarize + ToolCall
  double total_duration_s = 0.0;
  std::size_t num_searches = 0;
  std::size_t num_visits = 0;
  std::size_t num_domains = 0;
  std::size_t num_unique_urls = 0;
  std::size_t num_summaries = 0;
  double domain_entropy = 0.0;    // bits, over visit counts per domain
  double unique_url_ratio = 0.0;  // unique URLs / visits; 0 without visits
  double avg_latency_s = 0.0;     // mean gap between events inside the task window
  std::optional<double> query_similarity;
  std::map<std::string, std::size_t> domain_histogram;
  std::map<std::string, std::size_t> tool_counts;
  std::vector<std::string> queries;
  bool zero_events = false;
};

/// Throws InvalidTrial (wrong task type) or MissingTaskBoundary. A trial with
/// no web events is returned with `zero_events` set.
WebRaw extract_web_raw(const TrialRecord& trial);

/// Baseline reference for one (backbone, persona) stratum.
struct ReferenceProfile {
  std::string backbone;
  std::string persona;
  std::size_t n_trials = 0;
  std::map<std::string, double> domain_counts;  // pooled visit counts
  std::vector<std::string> tool_vocabulary;
  std::vector<double> tool_mean;                // aligned with tool_vocabulary
  std::set<std::string> baseline_domains;
};

ReferenceProfile build_reference_profile(const std::string& backbone, const std::string& persona,
                                         std::span<const WebRaw> baseline_trials,
                                         const std::vector<std::string>& tool_vocabulary);

inline constexpr double kKlSmoothing = 0.5;

/// KL(trial || reference) in bits, both smoothed with `alpha` over the union
/// of their supports. Throws EmptyReference.
double domain_kl(const std::map<std::string, std::size_t>& trial_hist, const ReferenceProfile& ref,
                 double alpha = kKlSmoothing);

/// |A n B| / |A u B|. Throws BothEmpty.
double domain_jaccard(const std::set<std::string>& trial_domains, const std::set<std::string>& ref_domains);

/// L1 distance between a trial's tool counts and the reference mean counts.
/// Throws VocabularyMismatch on unequal lengths.
double tool_drift(std::span<const double> trial_counts, std::span<const double> ref_mean);

/// Counts aligned with `vocabulary`. Throws VocabularyMismatch when the trial
/// used a tool outside it.
std::vector<double> tool_count_vector(const WebRaw& raw, const std::vector<std::string>& vocabulary);

/// Mean cosine over consecutive query pairs; nullopt with fewer than two
/// queries. Uses the supplied vectors when given, otherwise term-frequency
/// vectors over lowercase whitespace tokens (an empty query scores 0).
/// Throws VectorCountMismatch.
std::optional<double> query_similarity(std::span<const std::string> queries,
                                       std::optional<std::span<const std::vector<double>>> vectors = std::nullopt);

enum class WebMetric {
  NumWebEvents,
  TotalDurationS,
  ToolDrift,
  NumDomains,
  NumSearches,
  DomainEntropy,
  UniqueUrlRatio,
  DomainKl,
  DomainJaccard,
  NumUniqueUrls,
  NumSummaries,
  AvgLatencyS,
  QuerySimilarity,
};

inline constexpr std::array<WebMetric, 13> kWebMetrics = {
    WebMetric::NumWebEvents,   WebMetric::TotalDurationS, WebMetric::ToolDrift,     WebMetric::NumDomains,
    WebMetric::NumSearches,    WebMetric::DomainEntropy,  WebMetric::UniqueUrlRatio, WebMetric::DomainKl,
    WebMetric::DomainJaccard,  WebMetric::NumUniqueUrls,  WebMetric::NumSummaries,  WebMetric::AvgLatencyS,
    WebMetric::QuerySimilarity};

std::string_view to_string(WebMetric m) noexcept;
std::optional<WebMetric> parse_web_metric(std::string_view s) noexcept;

/// Raw measures plus the three reference-relative ones.
struct WebMetrics {
  WebRaw raw;
  std::optional<double> domain_kl;
  std::optional<double> domain_jaccard;
  std::optional<double> tool_drift;
};

std::optional<double> metric_value(const WebMetrics& m, WebMetric metric) noexcept;

struct WebTrialInput {
  std::string trial_id;
  std::string persona;
  bool is_baseline = false;
  WebRaw raw;
};

struct WebScores {
  std::string trial_id;
  std::string persona;
  bool is_baseline = false;
  WebMetrics metrics;
  std::array<std::optional<double>, 13> deltas;  // indexed like kWebMetrics
};

struct WebStratumResult {
  std::vector<WebScores> rows;  // input order
  std::vector<ReferenceProfile> profiles;
  std::vector<PersonaBaseline> baselines;
  std::vector<std::string> missing_reference;  // trials whose persona has no baseline
};

/// Two-phase scoring of one backbone stratum: reference profiles and persona
/// baseline means from the baseline trials first, then reference-relative
/// metrics and deltas for every trial. A baseline trial's reference-relative
/// metrics use a profile of the persona's other baseline trials (absent when
/// it is the only one); `profiles` holds the full ones.
WebStratumResult score_web_stratum(const std::string& backbone, std::span<const WebTrialInput> trials,
                                   const std::vector<std::string>& tool_vocabulary);

std::string web_scores_csv(std::span<const WebScores> rows);

/// JSON document holding a list of profiles.
std::string reference_profiles_json(std::span<const ReferenceProfile> profiles);
std::vector<ReferenceProfile> parse_reference_profiles_json(std::string_view text);

}  // namespace driftlab
