#include "driftlab/stance_dynamics.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "driftlab/csv.hpp"
#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"

namespace driftlab {

std::string_view to_string(Outcome v) noexcept {
  switch (v) {
    case Outcome::Persisted: return "persisted";
    case Outcome::Faded: return "faded";
    case Outcome::NoChange: return "no_change";
  }
  return "no_change";
}

Outcome classify(const StanceTrajectory& t) noexcept {
  if (t.post == t.initial) return Outcome::NoChange;
  return t.final == t.post ? Outcome::Persisted : Outcome::Faded;
}

bool persuasion_success(const StanceTrajectory& t) noexcept { return classify(t) == Outcome::Persisted; }

bool is_late_change(const StanceTrajectory& t) noexcept {
  return t.post == t.initial && t.final != t.initial;
}

std::optional<StanceTrajectory> trajectory_of(const TrialRecord& trial) {
  std::optional<Stance> phases[3];
  for (const TraceEvent& e : trial.events) {
    const auto* probe = e.as<event::StanceProbe>();
    if (!probe) continue;
    auto& slot = phases[static_cast<int>(probe->phase)];
    if (slot) return std::nullopt;
    slot = probe->stance;
  }
  for (const auto& s : phases) {
    if (!s || *s == Stance::Unparsed) return std::nullopt;
  }
  return StanceTrajectory{*phases[0], *phases[1], *phases[2], trial.header.distractor_count};
}

std::optional<GroupKey> parse_group_key(std::string_view s) noexcept {
  if (s == "backbone") return GroupKey::Backbone;
  if (s == "persona") return GroupKey::Persona;
  if (s == "tactic") return GroupKey::Tactic;
  if (s == "distractor_count") return GroupKey::DistractorCount;
  return std::nullopt;
}

std::string_view to_string(GroupKey k) noexcept {
  switch (k) {
    case GroupKey::Backbone: return "backbone";
    case GroupKey::Persona: return "persona";
    case GroupKey::Tactic: return "tactic";
    case GroupKey::DistractorCount: return "distractor_count";
  }
  return "backbone";
}

namespace {

std::string key_value(const TrialHeader& h, GroupKey k) {
  switch (k) {
    case GroupKey::Backbone: return h.backbone;
    case GroupKey::Persona: return h.persona;
    case GroupKey::Tactic: return std::string(to_string(h.tactic));
    case GroupKey::DistractorCount: return std::to_string(h.distractor_count);
  }
  return {};
}

bool key_less(const std::vector<GroupKey>& group_by, const std::vector<std::string>& a,
              const std::vector<std::string>& b) {
  for (std::size_t i = 0; i < group_by.size(); ++i) {
    if (a[i] == b[i]) continue;
    switch (group_by[i]) {
      case GroupKey::Tactic:
        return static_cast<int>(parse_tactic(a[i]).value_or(Tactic::Baseline)) <
               static_cast<int>(parse_tactic(b[i]).value_or(Tactic::Baseline));
      case GroupKey::DistractorCount:
        if (a[i].size() != b[i].size()) return a[i].size() < b[i].size();
        return a[i] < b[i];
      default: return a[i] < b[i];
    }
  }
  return false;
}

void finish_row(OutcomeRow& row) {
  const std::size_t n = row.counts.classified();
  if (n == 0) return;
  const double denom = static_cast<double>(n);
  row.persisted_pct = round_half_up(100.0 * static_cast<double>(row.counts.persisted) / denom, 2);
  row.faded_pct = round_half_up(100.0 * static_cast<double>(row.counts.faded) / denom, 2);
  row.no_change_pct = round_half_up(100.0 * static_cast<double>(row.counts.no_change) / denom, 2);
}

void add_trajectory(OutcomeCounts& c, const StanceTrajectory& t) {
  switch (classify(t)) {
    case Outcome::Persisted: ++c.persisted; break;
    case Outcome::Faded: ++c.faded; break;
    case Outcome::NoChange: ++c.no_change; break;
  }
  if (is_late_change(t)) ++c.late_change;
}

std::string pct(double v) { return fmt::format("{:.2f}", v); }

}  // namespace

OutcomeRow tally(std::span<const StanceTrajectory> trajectories, std::size_t excluded) {
  OutcomeRow row;
  for (const auto& t : trajectories) add_trajectory(row.counts, t);
  row.counts.excluded = excluded;
  finish_row(row);
  return row;
}

OutcomeTable outcome_table(std::span<const LabeledTrajectory> trials, std::span<const GroupKey> group_by) {
  OutcomeTable table;
  table.group_by.assign(group_by.begin(), group_by.end());
  std::vector<OutcomeRow> rows;
  for (const LabeledTrajectory& trial : trials) {
    std::vector<std::string> key;
    key.reserve(group_by.size());
    for (GroupKey k : group_by) key.push_back(key_value(trial.header, k));
    auto it = std::find_if(rows.begin(), rows.end(), [&](const OutcomeRow& r) { return r.key == key; });
    if (it == rows.end()) {
      rows.push_back(OutcomeRow{key, {}, 0.0, 0.0, 0.0});
      it = rows.end() - 1;
    }
    if (trial.trajectory) {
      add_trajectory(it->counts, *trial.trajectory);
    } else {
      ++it->counts.excluded;
    }
  }
  for (auto& row : rows) finish_row(row);
  std::sort(rows.begin(), rows.end(),
            [&](const OutcomeRow& a, const OutcomeRow& b) { return key_less(table.group_by, a.key, b.key); });
  table.rows = std::move(rows);
  return table;
}

OutcomeTable outcome_table(std::span<const TrialRecord> trials, std::span<const GroupKey> group_by) {
  std::vector<LabeledTrajectory> labeled;
  labeled.reserve(trials.size());
  for (const TrialRecord& trial : trials) labeled.push_back(LabeledTrajectory{trial.header, trajectory_of(trial)});
  return outcome_table(std::span<const LabeledTrajectory>(labeled), group_by);
}

std::string outcome_table_csv(const OutcomeTable& table) {
  std::ostringstream out;
  for (GroupKey k : table.group_by) out << to_string(k) << ',';
  out << "n,persisted,faded,no_change,excluded,late_change,persisted_pct,faded_pct,no_change_pct\n";
  for (const auto& row : table.rows) {
    for (const auto& v : row.key) out << csv::escape(v) << ',';
    const auto& c = row.counts;
    out << c.classified() << ',' << c.persisted << ',' << c.faded << ',' << c.no_change << ',' << c.excluded << ','
        << c.late_change << ',' << pct(row.persisted_pct) << ',' << pct(row.faded_pct) << ','
        << pct(row.no_change_pct) << '\n';
  }
  return out.str();
}

namespace {

struct WideLayout {
  std::vector<std::string> backbones;
  std::vector<std::string> tactics;
  const OutcomeRow* find(const OutcomeTable& t, const std::string& bb, const std::string& tac) const {
    for (const auto& r : t.rows) {
      if (r.key[0] == bb && r.key[1] == tac) return &r;
    }
    return nullptr;
  }
};

WideLayout wide_layout(const OutcomeTable& table) {
  if (table.group_by.size() != 2 || table.group_by[0] != GroupKey::Backbone || table.group_by[1] != GroupKey::Tactic) {
    throw Error(ErrorCode::UsageError, "wide outcome layout needs grouping (backbone, tactic)");
  }
  std::set<std::string> bbs;
  for (const auto& r : table.rows) bbs.insert(r.key[0]);
  WideLayout layout{{bbs.begin(), bbs.end()}, {}};
  for (Tactic t : kAllTactics) {
    const std::string name(to_string(t));
    if (std::any_of(table.rows.begin(), table.rows.end(), [&](const OutcomeRow& r) { return r.key[1] == name; })) {
      layout.tactics.push_back(name);
    }
  }
  return layout;
}

}  // namespace

std::string outcome_table_wide_markdown(const OutcomeTable& table) {
  const WideLayout layout = wide_layout(table);
  std::ostringstream out;
  out << "| Tactic |";
  for (const auto& bb : layout.backbones) out << ' ' << bb << " Persisted | " << bb << " Faded | " << bb << " NoChg |";
  out << "\n|---|";
  for (std::size_t i = 0; i < layout.backbones.size(); ++i) out << "---:|---:|---:|";
  out << '\n';
  for (const auto& tac : layout.tactics) {
    out << "| " << display_name(parse_tactic(tac).value_or(Tactic::Baseline)) << " |";
    for (const auto& bb : layout.backbones) {
      if (const OutcomeRow* r = layout.find(table, bb, tac)) {
        out << ' ' << pct(r->persisted_pct) << " | " << pct(r->faded_pct) << " | " << pct(r->no_change_pct) << " |";
      } else {
        out << " - | - | - |";
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string outcome_table_wide_csv(const OutcomeTable& table) {
  const WideLayout layout = wide_layout(table);
  std::ostringstream out;
  out << "Tactic";
  for (const auto& bb : layout.backbones) {
    out << ',' << csv::escape(bb + " Persisted") << ',' << csv::escape(bb + " Faded") << ','
        << csv::escape(bb + " NoChg");
  }
  out << '\n';
  for (const auto& tac : layout.tactics) {
    out << display_name(parse_tactic(tac).value_or(Tactic::Baseline));
    for (const auto& bb : layout.backbones) {
      if (const OutcomeRow* r = layout.find(table, bb, tac)) {
        out << ',' << pct(r->persisted_pct) << ',' << pct(r->faded_pct) << ',' << pct(r->no_change_pct);
      } else {
        out << ",,,";
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace driftlab
