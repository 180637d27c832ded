#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "driftlab/trace_model.hpp"

namespace driftlab {

struct WebParams {
  double searches_mean = 4.35;
  double domains_mean = 3.2;       // distinct domains, at least 1
  double unique_urls_mean = 5.27;  // at least domains_mean
  double revisits_mean = 0.8;
  double summaries_mean = 2.0;
  double tool_calls_mean = 3.0;
  double duration_mean_s = 120.0;
  double duration_sigma = 0.35;
};

struct CodingParams {
  double revisions_mean = 3.0;  // at least 1
  double revision_size_mean = 12.0;
  double think_gap_mean_s = 8.0;
  double exec_latency_mean_s = 2.5;
  double latency_sigma = 0.4;
};

struct PersonaParams {
  std::string name;
  WebParams web;
  CodingParams coding;
};

/// Effect keys a belief vector may shift (additive on the generating mean).
inline constexpr std::string_view kEffectKeys[] = {
    "num_searches", "num_domains", "num_unique_urls", "num_revisits", "num_summaries", "num_tool_calls",
    "total_duration_s", "nr", "ms", "think_gap_s", "exec_latency_s"};

struct SimConfig {
  std::uint64_t master_seed = 0;
  std::vector<std::string> backbones = {"sim-backbone"};
  std::vector<PersonaParams> personas;
  std::vector<TaskType> task_types = {TaskType::Web, TaskType::Coding};
  /// Trials per (backbone, task type, persona) for each generated condition.
  std::map<Condition, std::size_t> trials;
  /// Tactics cycled through C2 trials.
  std::vector<Tactic> tactics;
  std::map<Tactic, double> susceptibility;  // default per tactic
  std::map<std::string, std::map<Tactic, double>> persona_susceptibility;  // overrides
  double fade_probability = 0.3;
  std::uint64_t distractor_count = 1;
  std::map<std::string, double> belief_effect;
  std::map<std::string, double> disbelief_effect;
  std::vector<std::string> claim_ids;
  std::vector<std::string> domain_pool;
  std::vector<std::string> tools;

  /// Six personas, five conditions at 50 trials, calibrated susceptibilities
  /// and a zero effect vector.
  static SimConfig defaults();

  double susceptibility_of(const std::string& persona, Tactic tactic) const;

  /// Throws ConfigOutOfRange for probabilities outside [0, 1], zero trial
  /// counts, unknown effect keys, or a shifted mean leaving its valid range.
  void check() const;
};

/// Keys absent from the document keep their defaults. Throws
/// ConfigOutOfRange (bad value, unknown key) or InvalidCondition.
SimConfig parse_sim_config(std::string_view json_text);
SimConfig read_sim_config(const std::filesystem::path& path);
std::string sim_config_json(const SimConfig& config);

struct SimOutcome {
  TrialRecord trial;
  bool persuaded = false;
  std::map<std::string, double> applied_effect;
};

/// Generates every trial of the config. Trials are seeded independently from
/// the master seed and returned in index order, whatever `workers` is.
std::vector<SimOutcome> run_pipeline(const SimConfig& config, unsigned workers = 1);

inline constexpr std::string_view kTraceFileName = "traces.jsonl";
inline constexpr std::string_view kGroundTruthFileName = "ground_truth.json";

/// Ground-truth document: config plus per-trial persuaded flag and effect.
std::string ground_truth_json(const SimConfig& config, std::span<const SimOutcome> outcomes);

/// Writes `traces.jsonl` and `ground_truth.json` under `dir`. Throws
/// EmptyInput or IoFailure.
void emit_corpus(const SimConfig& config, std::span<const SimOutcome> outcomes, const std::filesystem::path& dir);

/// Config recorded in a ground-truth document, for regeneration.
SimConfig config_from_ground_truth(std::string_view json_text);

}  // namespace driftlab
