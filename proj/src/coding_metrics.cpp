#include "driftlab/coding_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "driftlab/csv.hpp"
#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"

namespace driftlab {

std::string_view to_string(CodingMetric m) noexcept {
  switch (m) {
    case CodingMetric::CD: return "cd";
    case CodingMetric::TD: return "td";
    case CodingMetric::NR: return "nr";
    case CodingMetric::RE: return "re";
    case CodingMetric::MS: return "ms";
  }
  return "cd";
}

double metric_value(const CodingRaw& raw, CodingMetric m) noexcept {
  switch (m) {
    case CodingMetric::CD: return raw.cd;
    case CodingMetric::TD: return raw.td;
    case CodingMetric::NR: return static_cast<double>(raw.nr);
    case CodingMetric::RE: return raw.re;
    case CodingMetric::MS: return raw.ms;
  }
  return 0.0;
}

CodingRaw extract_coding_raw(const TrialRecord& trial) {
  const std::string& id = trial.header.trial_id;
  if (trial.header.task_type != TaskType::Coding) {
    throw Error(ErrorCode::InvalidTrial, "trial '" + id + "' is not a coding trial");
  }
  std::optional<double> start, end, open_span;
  std::size_t execs = 0;
  std::vector<double> sizes;
  double cd = 0.0;
  for (const TraceEvent& e : trial.events) {
    switch (e.kind()) {
      case EventKind::TaskStart: start = e.t; break;
      case EventKind::TaskEnd: end = e.t; break;
      case EventKind::CodeRevision:
        sizes.push_back(static_cast<double>(e.as<event::CodeRevision>()->lines_changed));
        open_span = e.t;
        break;
      case EventKind::CodeExec:
        ++execs;
        if (open_span) {
          cd += e.t - *open_span;
          open_span.reset();
        }
        break;
      default: break;
    }
  }
  if (!start || !end) throw Error(ErrorCode::MissingTaskBoundary, "trial '" + id + "'");
  if (execs == 0) throw Error(ErrorCode::NoCodeActivity, "trial '" + id + "' has no code_exec events");

  CodingRaw raw;
  raw.cd = cd;
  raw.td = *end - *start;
  raw.nr = sizes.size();
  raw.re = sizes.size() <= 1 ? 0.0 : shannon_entropy_bits(sizes);
  raw.ms = sizes.empty() ? 0.0 : mean(sizes);
  return raw;
}

void BaselineTable::add(const std::string& persona, const std::string& metric, double value) {
  auto& a = acc_[{persona, metric}];
  a.sum += value;
  ++a.n;
}

bool BaselineTable::contains(const std::string& persona, const std::string& metric) const {
  return acc_.contains({persona, metric});
}

PersonaBaseline BaselineTable::at(const std::string& persona, const std::string& metric) const {
  const auto it = acc_.find({persona, metric});
  if (it == acc_.end()) {
    throw Error(ErrorCode::MissingBaseline, "persona '" + persona + "', metric '" + metric + "'");
  }
  return PersonaBaseline{persona, metric, it->second.sum / static_cast<double>(it->second.n), it->second.n};
}

std::vector<PersonaBaseline> BaselineTable::entries() const {
  std::vector<PersonaBaseline> out;
  out.reserve(acc_.size());
  for (const auto& [key, a] : acc_) {
    out.push_back(PersonaBaseline{key.first, key.second, a.sum / static_cast<double>(a.n), a.n});
  }
  return out;
}

double persona_delta(double value, const PersonaBaseline& baseline) { return value - baseline.mu; }

std::vector<double> percentile_ranks(std::span<const double> deltas) {
  if (deltas.empty()) throw Error(ErrorCode::EmptyInput, "percentile ranks of an empty sequence");
  std::vector<double> sorted(deltas.begin(), deltas.end());
  for (double d : sorted) {
    if (!std::isfinite(d)) throw Error(ErrorCode::NonFinite, "non-finite delta");
  }
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<double> ranks;
  ranks.reserve(deltas.size());
  for (double d : deltas) {
    const auto at_or_below = std::upper_bound(sorted.begin(), sorted.end(), d) - sorted.begin();
    ranks.push_back(static_cast<double>(at_or_below) / n);
  }
  return ranks;
}

CompositeScores composite_scores(const CodingRanks& r) {
  const auto need = [](const std::optional<double>& q, const char* name) {
    if (!q) throw Error(ErrorCode::MissingRank, name);
    return *q;
  };
  const double cd = need(r.cd, "cd");
  const double td = need(r.td, "td");
  const double nr = need(r.nr, "nr");
  const double re = need(r.re, "re");
  const double ms = need(r.ms, "ms");
  return CompositeScores{1.0 - (cd + td + nr) / 3.0, (re + (1.0 - ms)) / 2.0};
}

CodingStratumResult score_coding_stratum(std::span<const CodingTrialInput> trials) {
  CodingStratumResult result;
  BaselineTable baselines;
  for (const auto& t : trials) {
    if (!t.is_baseline) continue;
    for (CodingMetric m : kCodingMetrics) baselines.add(t.persona, std::string(to_string(m)), metric_value(t.raw, m));
  }
  result.baselines = baselines.entries();

  result.rows.reserve(trials.size());
  std::vector<std::size_t> ranked;  // rows entering the rank computation
  for (const auto& t : trials) {
    CodingScores row;
    row.trial_id = t.trial_id;
    row.persona = t.persona;
    row.is_baseline = t.is_baseline;
    row.raw = t.raw;
    bool complete = true;
    for (std::size_t k = 0; k < kCodingMetrics.size(); ++k) {
      const std::string name(to_string(kCodingMetrics[k]));
      if (!baselines.contains(t.persona, name)) {
        complete = false;
        continue;
      }
      row.deltas[k] = persona_delta(metric_value(t.raw, kCodingMetrics[k]), baselines.at(t.persona, name));
    }
    if (!t.is_baseline) {
      if (complete) {
        ranked.push_back(result.rows.size());
      } else {
        result.missing_baseline.push_back(t.trial_id);
      }
    }
    result.rows.push_back(std::move(row));
  }

  if (ranked.empty()) return result;
  for (std::size_t k = 0; k < kCodingMetrics.size(); ++k) {
    std::vector<double> column;
    column.reserve(ranked.size());
    for (std::size_t i : ranked) column.push_back(*result.rows[i].deltas[k]);
    const auto q = percentile_ranks(column);
    for (std::size_t j = 0; j < ranked.size(); ++j) result.rows[ranked[j]].ranks[k] = q[j];
  }
  for (std::size_t i : ranked) {
    CodingScores& row = result.rows[i];
    const CodingRanks r{row.ranks[0], row.ranks[1], row.ranks[2], row.ranks[3], row.ranks[4]};
    const CompositeScores s = composite_scores(r);
    row.inverted_ms_rank = 1.0 - *row.ranks[4];
    row.trs = s.trs;
    row.evs = s.evs;
  }
  return result;
}

std::string coding_scores_csv(std::span<const CodingScores> rows) {
  std::ostringstream out;
  out << "trial_id,cd,td,nr,re,ms";
  for (const char* prefix : {"d_", "q_"}) {
    for (CodingMetric m : kCodingMetrics) out << ',' << prefix << to_string(m);
  }
  out << ",trs,evs\n";
  for (const auto& r : rows) {
    out << csv::escape(r.trial_id) << ',' << csv::number(r.raw.cd) << ',' << csv::number(r.raw.td) << ',' << r.raw.nr
        << ',' << csv::number(r.raw.re) << ',' << csv::number(r.raw.ms);
    for (const auto& d : r.deltas) out << ',' << csv::number(d);
    for (const auto& q : r.ranks) out << ',' << csv::number(q);
    out << ',' << csv::number(r.trs) << ',' << csv::number(r.evs) << '\n';
  }
  return out.str();
}

}  // namespace driftlab
