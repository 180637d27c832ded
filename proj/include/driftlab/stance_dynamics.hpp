#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftlab/trace_model.hpp"

namespace driftlab {

enum class Outcome { Persisted, Faded, NoChange };

std::string_view to_string(Outcome v) noexcept;

/// Stances at the initial, post-exposure and final probes. Only fully parsed
/// trajectories are representable.
struct StanceTrajectory {
  Stance initial = Stance::A;
  Stance post = Stance::A;
  Stance final = Stance::A;
  std::uint64_t distractor_count = 0;
};

/// Persisted: changed after exposure and kept. Faded: changed, then reverted.
/// NoChange: post equals initial, whatever happens at the final probe.
Outcome classify(const StanceTrajectory& trajectory) noexcept;

/// A change from the initial probe that is still held at the final probe.
bool persuasion_success(const StanceTrajectory& trajectory) noexcept;

/// post == initial but final != initial (counted as NoChange, tallied apart).
bool is_late_change(const StanceTrajectory& trajectory) noexcept;

/// Reads the three probes of a trial. nullopt when any probe is missing,
/// duplicated, or Unparsed.
std::optional<StanceTrajectory> trajectory_of(const TrialRecord& trial);

enum class GroupKey { Backbone, Persona, Tactic, DistractorCount };

std::optional<GroupKey> parse_group_key(std::string_view s) noexcept;
std::string_view to_string(GroupKey k) noexcept;

struct OutcomeCounts {
  std::size_t persisted = 0;
  std::size_t faded = 0;
  std::size_t no_change = 0;
  std::size_t excluded = 0;
  std::size_t late_change = 0;

  std::size_t classified() const noexcept { return persisted + faded + no_change; }
};

struct OutcomeRow {
  std::vector<std::string> key;  // one value per group key, in group_by order
  OutcomeCounts counts;
  // Two-decimal half-up percentages of classified trials; all zero for a
  // group with no classified trials.
  double persisted_pct = 0.0;
  double faded_pct = 0.0;
  double no_change_pct = 0.0;
};

struct OutcomeTable {
  std::vector<GroupKey> group_by;
  std::vector<OutcomeRow> rows;  // sorted by key
};

OutcomeTable outcome_table(std::span<const TrialRecord> trials, std::span<const GroupKey> group_by);

/// Header plus an already-extracted trajectory (nullopt counts as excluded).
struct LabeledTrajectory {
  TrialHeader header;
  std::optional<StanceTrajectory> trajectory;
};
OutcomeTable outcome_table(std::span<const LabeledTrajectory> trials, std::span<const GroupKey> group_by);

/// Same tally from already-extracted trajectories (single group).
OutcomeRow tally(std::span<const StanceTrajectory> trajectories, std::size_t excluded = 0);

/// Long-format CSV: key columns, counts and percentages.
std::string outcome_table_csv(const OutcomeTable& table);

/// Tactic rows x (Persisted, Faded, NoChg) column triples per backbone.
/// Requires the table to be grouped by exactly {backbone, tactic}.
std::string outcome_table_wide_markdown(const OutcomeTable& table);
std::string outcome_table_wide_csv(const OutcomeTable& table);

}  // namespace driftlab
