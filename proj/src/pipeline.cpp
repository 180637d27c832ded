#include "driftlab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "driftlab/coding_metrics.hpp"
#include "driftlab/constructs.hpp"
#include "driftlab/csv.hpp"
#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/web_metrics.hpp"

namespace fs = std::filesystem;

namespace driftlab {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Family f) noexcept { return f == Family::OnTheFly ? "on_the_fly" : "prefill"; }

Family family_of(Condition c) noexcept { return is_prefill(c) ? Family::Prefill : Family::OnTheFly; }

std::string files::reference_profiles(Family f) {
  return fmt::format("reference_profiles_{}.json", to_string(f));
}

bool RunOptions::wants(std::string_view format) const {
  return std::find(formats.begin(), formats.end(), format) != formats.end();
}

Condition baseline_condition(Family f, const RunOptions& options) {
  if (f == Family::Prefill) return Condition::C0P;
  switch (options.baseline) {
    case Condition::C0:
    case Condition::C1: return options.baseline;
    case Condition::C0P: return Condition::C1;
    default: break;
  }
  throw Error(ErrorCode::UsageError, "baseline must be C0, C1 or C0P");
}

namespace {

std::vector<std::string> split_list(std::string_view list) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : list) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::vector<std::string> parse_formats(std::string_view list) {
  std::vector<std::string> out;
  for (auto& f : split_list(list)) {
    if (f != "csv" && f != "md" && f != "json") throw Error(ErrorCode::UsageError, "unknown format '" + f + "'");
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  }
  if (out.empty()) throw Error(ErrorCode::UsageError, "no output format given");
  return out;
}

std::vector<GroupKey> parse_group_by(std::string_view list) {
  std::vector<GroupKey> out;
  for (const auto& k : split_list(list)) {
    const auto key = parse_group_key(k);
    if (!key) throw Error(ErrorCode::UsageError, "unknown group key '" + k + "'");
    if (std::find(out.begin(), out.end(), *key) != out.end()) {
      throw Error(ErrorCode::UsageError, "group key '" + k + "' repeated");
    }
    out.push_back(*key);
  }
  return out;
}

// ---------------------------------------------------------------- validate

ValidateReport run_validate(const fs::path& traces) {
  ParseResult pr = parse_trace_path(traces);
  return ValidateReport{pr.trials.size(), std::move(pr.violations), std::move(pr.rejected_trial_ids)};
}

std::string render_validate(const ValidateReport& report) {
  std::ostringstream out;
  for (const auto& v : report.violations) {
    out << v.trial_id << '\t' << (v.line ? std::to_string(*v.line) : "-") << '\t' << v.rule << '\t' << v.message
        << '\n';
  }
  out << report.trials_loaded << " trials loaded, " << report.rejected_trial_ids.size() << " rejected, "
      << report.violations.size() << " violations\n";
  return out.str();
}

// ---------------------------------------------------------------- simulate

void run_simulate(const SimConfig& config, const fs::path& out, unsigned workers) {
  const auto outcomes = run_pipeline(config, workers);
  emit_corpus(config, outcomes, out);
  spdlog::info("simulated {} trials into {}", outcomes.size(), out.string());
}

// ---------------------------------------------------------------- shared IO

namespace {

fs::path out_file(const RunOptions& o, std::string_view name) { return o.out / fs::path(std::string(name)); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingUpstream, path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TrialInfo {
  std::string id;
  std::string backbone;
  std::string persona;
  Tactic tactic = Tactic::Baseline;
  Condition condition = Condition::C0;
  TaskType task = TaskType::Opinion;
  std::string claim_id;
  std::uint64_t distractor_count = 0;
  Family family = Family::OnTheFly;
  bool is_baseline = false;
  std::string outcome;  // persisted / faded / no_change / excluded, empty for prefill
  std::optional<bool> persuaded;
};

std::vector<TrialInfo> read_trials(const RunOptions& o) {
  const csv::Table t = csv::read(out_file(o, files::kTrials));
  const std::size_t c_id = t.column("trial_id"), c_bb = t.column("backbone"), c_p = t.column("persona"),
                    c_tac = t.column("tactic"), c_cond = t.column("condition"), c_task = t.column("task_type"),
                    c_claim = t.column("claim_id"), c_d = t.column("distractor_count"),
                    c_base = t.column("is_baseline"), c_out = t.column("outcome"),
                    c_pers = t.column("persuaded");
  std::vector<TrialInfo> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    TrialInfo info;
    info.id = r[c_id];
    info.backbone = r[c_bb];
    info.persona = r[c_p];
    const auto tac = parse_tactic(r[c_tac]);
    const auto cond = parse_condition(r[c_cond]);
    const auto task = parse_task_type(r[c_task]);
    if (!tac || !cond || !task) throw Error(ErrorCode::MalformedLine, "trials.csv row for '" + info.id + "'");
    info.tactic = *tac;
    info.condition = *cond;
    info.task = *task;
    info.claim_id = r[c_claim];
    info.distractor_count = static_cast<std::uint64_t>(csv::to_double(r[c_d]));
    info.family = family_of(info.condition);
    info.is_baseline = r[c_base] == "1";
    info.outcome = r[c_out];
    if (r[c_pers] == "1") info.persuaded = true;
    if (r[c_pers] == "0") info.persuaded = false;
    out.push_back(std::move(info));
  }
  return out;
}

// trial_id -> column -> value, merged over several tables.
using CellMap = std::map<std::string, std::map<std::string, std::optional<double>>>;

void merge_cells(CellMap& cells, const csv::Table& t) {
  const std::size_t c_id = t.column("trial_id");
  for (const auto& row : t.rows) {
    auto& dst = cells[row[c_id]];
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (c == c_id) continue;
      dst[t.header[c]] = csv::to_optional_double(row[c]);
    }
  }
}

std::optional<double> cell(const CellMap& cells, const std::string& id, const std::string& column) {
  const auto it = cells.find(id);
  if (it == cells.end()) return std::nullopt;
  const auto jt = it->second.find(column);
  return jt == it->second.end() ? std::nullopt : jt->second;
}

}  // namespace

// ---------------------------------------------------------------- metrics

MetricsSummary run_metrics(const RunOptions& o) {
  ParseResult pr = parse_trace_path(o.traces);
  for (const auto& v : pr.violations) spdlog::warn("trial '{}' rejected: {} ({})", v.trial_id, v.rule, v.message);
  ensure_dir(o.out);

  MetricsSummary summary;
  summary.trials = pr.trials.size();
  summary.rejected = pr.rejected_trial_ids.size();

  std::ostringstream trials_csv, stance_csv, flags_csv;
  trials_csv << "trial_id,backbone,persona,tactic,condition,task_type,claim_id,distractor_count,family,is_baseline,"
                "outcome,persuaded\n";
  stance_csv << "trial_id,initial,post,final,outcome,late_change\n";
  flags_csv << "trial_id,flag\n";

  for (const auto& trial : pr.trials) {
    const TrialHeader& h = trial.header;
    const Family fam = family_of(h.condition);
    std::string outcome, persuaded;
    if (requires_probes(h.condition)) {
      const auto traj = trajectory_of(trial);
      if (traj) {
        const Outcome oc = classify(*traj);
        outcome = to_string(oc);
        persuaded = oc == Outcome::Persisted ? "1" : "0";
        stance_csv << csv::escape(h.trial_id) << ',' << to_string(traj->initial) << ',' << to_string(traj->post) << ','
                   << to_string(traj->final) << ',' << outcome << ',' << (is_late_change(*traj) ? 1 : 0) << '\n';
      } else {
        outcome = "excluded";
        stance_csv << csv::escape(h.trial_id) << ",,,,excluded,0\n";
      }
    }
    trials_csv << csv::escape(h.trial_id) << ',' << csv::escape(h.backbone) << ',' << csv::escape(h.persona) << ','
               << to_string(h.tactic) << ',' << to_string(h.condition) << ',' << to_string(h.task_type) << ','
               << csv::escape(h.claim_id) << ',' << h.distractor_count << ',' << to_string(fam) << ','
               << (h.condition == baseline_condition(fam, o) ? 1 : 0) << ',' << outcome << ',' << persuaded << '\n';
  }

  // Coding: one stratum per (backbone, family).
  std::map<std::pair<std::string, Family>, std::vector<CodingTrialInput>> coding_strata;
  std::vector<std::string> coding_order;
  for (const auto& trial : pr.trials) {
    const TrialHeader& h = trial.header;
    if (h.task_type != TaskType::Coding) continue;
    ++summary.coding_trials;
    try {
      const Family fam = family_of(h.condition);
      coding_strata[{h.backbone, fam}].push_back(
          CodingTrialInput{h.trial_id, h.persona, h.condition == baseline_condition(fam, o), extract_coding_raw(trial)});
      coding_order.push_back(h.trial_id);
    } catch (const Error& e) {
      ++summary.flagged;
      flags_csv << csv::escape(h.trial_id) << ',' << to_string(e.code()) << '\n';
      spdlog::warn("coding trial '{}' flagged: {}", h.trial_id, e.what());
    }
  }
  std::map<std::string, CodingScores> coding_rows;
  for (const auto& [key, inputs] : coding_strata) {
    auto res = score_coding_stratum(inputs);
    for (const auto& id : res.missing_baseline) {
      spdlog::warn("coding trial '{}' has no persona baseline in {}/{}", id, key.first, to_string(key.second));
    }
    for (auto& row : res.rows) coding_rows.emplace(row.trial_id, std::move(row));
  }
  std::vector<CodingScores> coding_out;
  for (const auto& id : coding_order) coding_out.push_back(coding_rows.at(id));
  csv::write_text(out_file(o, files::kCoding), coding_scores_csv(coding_out));

  // Web: tool vocabulary fixed over the corpus, then two-phase scoring.
  std::map<std::pair<std::string, Family>, std::vector<WebTrialInput>> web_strata;
  std::vector<std::string> web_order;
  std::set<std::string> tool_set;
  for (const auto& trial : pr.trials) {
    const TrialHeader& h = trial.header;
    if (h.task_type != TaskType::Web) continue;
    ++summary.web_trials;
    try {
      const Family fam = family_of(h.condition);
      WebRaw raw = extract_web_raw(trial);
      if (raw.zero_events) {
        ++summary.flagged;
        flags_csv << csv::escape(h.trial_id) << ",ZeroEvents\n";
      }
      for (const auto& [tool, n] : raw.tool_counts) tool_set.insert(tool);
      web_strata[{h.backbone, fam}].push_back(
          WebTrialInput{h.trial_id, h.persona, h.condition == baseline_condition(fam, o), std::move(raw)});
      web_order.push_back(h.trial_id);
    } catch (const Error& e) {
      ++summary.flagged;
      flags_csv << csv::escape(h.trial_id) << ',' << to_string(e.code()) << '\n';
      spdlog::warn("web trial '{}' flagged: {}", h.trial_id, e.what());
    }
  }
  const std::vector<std::string> vocabulary(tool_set.begin(), tool_set.end());
  std::map<std::string, WebScores> web_rows;
  std::map<Family, std::vector<ReferenceProfile>> profiles;
  for (const auto& [key, inputs] : web_strata) {
    auto res = score_web_stratum(key.first, inputs, vocabulary);
    for (const auto& id : res.missing_reference) {
      spdlog::warn("web trial '{}' has no persona reference in {}/{}", id, key.first, to_string(key.second));
    }
    for (auto& p : res.profiles) profiles[key.second].push_back(std::move(p));
    for (auto& row : res.rows) web_rows.emplace(row.trial_id, std::move(row));
  }
  std::vector<WebScores> web_out;
  for (const auto& id : web_order) web_out.push_back(web_rows.at(id));
  csv::write_text(out_file(o, files::kWeb), web_scores_csv(web_out));
  for (Family f : {Family::OnTheFly, Family::Prefill}) {
    csv::write_text(out_file(o, files::reference_profiles(f)), reference_profiles_json(profiles[f]));
  }

  csv::write_text(out_file(o, files::kTrials), trials_csv.str());
  csv::write_text(out_file(o, files::kStance), stance_csv.str());
  csv::write_text(out_file(o, files::kFlags), flags_csv.str());

  std::error_code ec;
  const fs::path emb = o.traces / "embeddings.jsonl";
  if (fs::is_directory(o.traces, ec) && fs::exists(emb, ec)) {
    const auto pairs = read_embedding_sidecar(emb);
    ojson j;
    if (pairs.empty()) {
      j["n"] = 0;
    } else {
      const auto s = summarize_irrelevance(pairs);
      j["n"] = s.n;
      j["mean"] = s.mean;
      j["median"] = s.median;
      j["q1"] = s.q1;
      j["q3"] = s.q3;
    }
    csv::write_text(out_file(o, files::kIrrelevance), j.dump(2) + "\n");
  }
  return summary;
}

// ---------------------------------------------------------------- aggregate

namespace {

ojson outcome_table_to_json(const OutcomeTable& t) {
  ojson j;
  j["group_by"] = ojson::array();
  for (GroupKey k : t.group_by) j["group_by"].push_back(to_string(k));
  j["rows"] = ojson::array();
  for (const auto& r : t.rows) {
    ojson row;
    row["key"] = r.key;
    row["persisted"] = r.counts.persisted;
    row["faded"] = r.counts.faded;
    row["no_change"] = r.counts.no_change;
    row["excluded"] = r.counts.excluded;
    row["late_change"] = r.counts.late_change;
    row["persisted_pct"] = r.persisted_pct;
    row["faded_pct"] = r.faded_pct;
    row["no_change_pct"] = r.no_change_pct;
    j["rows"].push_back(std::move(row));
  }
  return j;
}

OutcomeTable outcome_table_from_json(const nlohmann::json& j) {
  OutcomeTable t;
  for (const auto& k : j.at("group_by")) {
    const auto key = parse_group_key(k.get<std::string>());
    if (!key) throw Error(ErrorCode::MalformedLine, "outcomes.json group key");
    t.group_by.push_back(*key);
  }
  for (const auto& r : j.at("rows")) {
    OutcomeRow row;
    row.key = r.at("key").get<std::vector<std::string>>();
    row.counts.persisted = r.at("persisted").get<std::size_t>();
    row.counts.faded = r.at("faded").get<std::size_t>();
    row.counts.no_change = r.at("no_change").get<std::size_t>();
    row.counts.excluded = r.at("excluded").get<std::size_t>();
    row.counts.late_change = r.at("late_change").get<std::size_t>();
    row.persisted_pct = r.at("persisted_pct").get<double>();
    row.faded_pct = r.at("faded_pct").get<double>();
    row.no_change_pct = r.at("no_change_pct").get<double>();
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

void run_aggregate(const RunOptions& o) {
  const auto trials = read_trials(o);
  std::map<std::string, const TrialInfo*> by_id;
  for (const auto& t : trials) by_id[t.id] = &t;

  // Construct scores.
  const csv::Table web = csv::read(out_file(o, files::kWeb));
  const std::size_t c_id = web.column("trial_id");
  std::vector<std::size_t> delta_cols;
  std::vector<std::string> names;
  for (WebMetric m : kWebMetrics) {
    names.emplace_back(to_string(m));
    delta_cols.push_back(web.column("d_" + names.back()));
  }
  std::map<std::pair<std::string, Family>, DeltaMatrix> strata;
  std::vector<std::string> order;
  for (const auto& row : web.rows) {
    const auto it = by_id.find(row[c_id]);
    if (it == by_id.end()) throw Error(ErrorCode::MalformedLine, "web row '" + row[c_id] + "' missing from trials.csv");
    DeltaMatrix& m = strata[{it->second->backbone, it->second->family}];
    m.columns = names;
    m.trial_ids.push_back(row[c_id]);
    std::vector<std::optional<double>> cells;
    for (std::size_t c : delta_cols) cells.push_back(csv::to_optional_double(row[c]));
    m.rows.push_back(std::move(cells));
    order.push_back(row[c_id]);
  }
  const ConstructMap map = ConstructMap::defaults();
  std::vector<ConstructFit> fits;
  std::map<std::string, ConstructScore> scores;
  for (const auto& [key, matrix] : strata) {
    auto res = fit_construct_pca(matrix, map, key.first + "/" + std::string(to_string(key.second)));
    for (const auto& f : res.fits) {
      if (!f.fit) spdlog::warn("construct {} skipped in {}: {}", to_string(f.construct), f.stratum, f.skipped_reason);
      else if (!f.fit->dropped.empty()) {
        spdlog::warn("construct {} in {}: {} zero-variance column(s) dropped", to_string(f.construct), f.stratum,
                     f.fit->dropped.size());
      }
    }
    for (auto& f : res.fits) fits.push_back(std::move(f));
    for (auto& s : res.scores) scores.emplace(s.trial_id, std::move(s));
  }
  std::ostringstream sc;
  sc << "trial_id";
  for (Construct c : kConstructs) sc << ',' << score_name(c);
  sc << '\n';
  for (const auto& id : order) {
    const auto& s = scores.at(id);
    sc << csv::escape(id);
    for (const auto& v : s.dpc) sc << ',' << csv::number(v);
    sc << '\n';
  }
  csv::write_text(out_file(o, files::kConstructScores), sc.str());
  csv::write_text(out_file(o, files::kLoadings), loadings_json(fits));

  // Outcome table over persuasive on-the-fly trials.
  const csv::Table stance = csv::read(out_file(o, files::kStance));
  const std::size_t s_id = stance.column("trial_id"), s_i = stance.column("initial"), s_p = stance.column("post"),
                    s_f = stance.column("final");
  std::map<std::string, std::optional<StanceTrajectory>> traj;
  for (const auto& row : stance.rows) {
    std::optional<StanceTrajectory> t;
    if (!row[s_i].empty()) {
      t = StanceTrajectory{parse_stance(row[s_i]), parse_stance(row[s_p]), parse_stance(row[s_f]), 0};
    }
    traj[row[s_id]] = t;
  }
  std::vector<LabeledTrajectory> labeled;
  for (const auto& t : trials) {
    if (t.condition != Condition::C2) continue;
    LabeledTrajectory lt;
    lt.header.trial_id = t.id;
    lt.header.backbone = t.backbone;
    lt.header.persona = t.persona;
    lt.header.tactic = t.tactic;
    lt.header.condition = t.condition;
    lt.header.task_type = t.task;
    lt.header.claim_id = t.claim_id;
    lt.header.distractor_count = t.distractor_count;
    if (const auto it = traj.find(t.id); it != traj.end() && it->second) {
      lt.trajectory = *it->second;
      lt.trajectory->distractor_count = t.distractor_count;
    }
    labeled.push_back(std::move(lt));
  }
  const OutcomeTable table = outcome_table(std::span<const LabeledTrajectory>(labeled), o.group_by);
  csv::write_text(out_file(o, files::kOutcomesCsv), outcome_table_csv(table));
  csv::write_text(out_file(o, files::kOutcomesJson), outcome_table_to_json(table).dump(2) + "\n");
}

// ---------------------------------------------------------------- compare

namespace {

struct MetricSpec {
  std::string label;
  std::string value_column;
  std::string raw_column;
};

std::vector<MetricSpec> metric_specs(TaskType task) {
  std::vector<MetricSpec> specs;
  if (task == TaskType::Web) {
    for (WebMetric m : kWebMetrics) {
      const std::string n(to_string(m));
      specs.push_back({n, "d_" + n, n});
    }
    for (Construct c : kConstructs) {
      const std::string n(score_name(c));
      specs.push_back({n, n, n});
    }
  } else if (task == TaskType::Coding) {
    for (CodingMetric m : kCodingMetrics) {
      const std::string n(to_string(m));
      specs.push_back({n, "d_" + n, n});
    }
    specs.push_back({"trs", "trs", "trs"});
    specs.push_back({"evs", "evs", "evs"});
  }
  return specs;
}

struct ComparisonDef {
  Family family;
  std::string name;
  std::function<bool(const TrialInfo&)> in_a;
  std::function<bool(const TrialInfo&)> in_b;
};

std::vector<ComparisonDef> comparison_defs(const RunOptions& o) {
  const Condition otf = baseline_condition(Family::OnTheFly, o);
  const auto cond = [](Condition c) { return [c](const TrialInfo& t) { return t.condition == c; }; };
  return {
      {Family::OnTheFly, "P-NP",
       [](const TrialInfo& t) { return t.condition == Condition::C2 && t.persuaded == true; },
       [](const TrialInfo& t) { return t.condition == Condition::C2 && t.persuaded == false; }},
      {Family::OnTheFly, "C2-" + std::string(to_string(otf)), cond(Condition::C2), cond(otf)},
      {Family::Prefill, "B-C0P", cond(Condition::B), cond(Condition::C0P)},
      {Family::Prefill, "NB-C0P", cond(Condition::NB), cond(Condition::C0P)},
      {Family::Prefill, "B-NB", cond(Condition::B), cond(Condition::NB)},
  };
}

constexpr std::uint64_t kCompareStream = 0x636f'6d70'6172'65ULL;

ojson result_json(const ComparisonRecord& r) {
  const ComparisonResult& c = r.result;
  ojson j;
  j["family"] = r.family;
  j["backbone"] = r.backbone;
  j["task"] = r.task;
  j["comparison"] = r.comparison;
  j["metric"] = r.metric;
  j["raw_mean_a"] = r.raw_mean_a;
  j["raw_mean_b"] = r.raw_mean_b;
  j["seed"] = r.seed;
  j["mean_a"] = c.mean_a;
  j["mean_b"] = c.mean_b;
  j["delta"] = c.delta_mean;
  j["p_value"] = c.p_value;
  j["ci_low"] = c.ci_low;
  j["ci_high"] = c.ci_high;
  j["se"] = c.se;
  j["iqr_persona"] = c.iqr_persona ? ojson(*c.iqr_persona) : ojson(nullptr);
  j["n_personas"] = c.n_personas;
  j["n_a"] = c.n_a;
  j["n_b"] = c.n_b;
  j["exhaustive"] = c.exhaustive;
  j["permutations"] = c.permutations;
  j["degenerate"] = c.degenerate;
  if (c.welch) {
    j["welch"] = {{"t", c.welch->t}, {"df", c.welch->df}, {"p_value", c.welch->p_value}};
  } else {
    j["welch"] = nullptr;
  }
  return j;
}

ComparisonRecord result_from_json(const nlohmann::json& j) {
  ComparisonRecord r;
  r.family = j.at("family").get<std::string>();
  r.backbone = j.at("backbone").get<std::string>();
  r.task = j.at("task").get<std::string>();
  r.comparison = j.at("comparison").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.raw_mean_a = j.at("raw_mean_a").get<double>();
  r.raw_mean_b = j.at("raw_mean_b").get<double>();
  r.seed = j.value("seed", std::uint64_t{0});
  ComparisonResult& c = r.result;
  c.mean_a = j.value("mean_a", r.raw_mean_a);
  c.mean_b = j.value("mean_b", r.raw_mean_b);
  c.delta_mean = j.at("delta").get<double>();
  c.p_value = j.at("p_value").get<double>();
  c.ci_low = j.value("ci_low", 0.0);
  c.ci_high = j.value("ci_high", 0.0);
  c.se = j.value("se", 0.0);
  if (j.contains("iqr_persona") && !j.at("iqr_persona").is_null()) c.iqr_persona = j.at("iqr_persona").get<double>();
  c.n_personas = j.value("n_personas", std::size_t{0});
  c.n_a = j.value("n_a", std::size_t{0});
  c.n_b = j.value("n_b", std::size_t{0});
  c.exhaustive = j.value("exhaustive", false);
  c.permutations = j.value("permutations", std::size_t{0});
  c.degenerate = j.value("degenerate", false);
  if (j.contains("welch") && !j.at("welch").is_null()) {
    const auto& w = j.at("welch");
    c.welch = WelchResult{w.at("t").get<double>(), w.at("df").get<double>(), w.at("p_value").get<double>()};
  }
  return r;
}

std::string opt_number(const std::optional<double>& v) { return csv::number(v); }

}  // namespace

std::string comparisons_csv(std::span<const ComparisonRecord> records) {
  std::ostringstream out;
  out << "family,backbone,task,comparison,metric,raw_mean_a,raw_mean_b,mean_a,mean_b,delta,p_value,ci_low,ci_high,"
         "se,iqr_persona,n_personas,n_a,n_b,exhaustive,degenerate,welch_t,welch_df,welch_p\n";
  for (const auto& r : records) {
    const auto& c = r.result;
    out << r.family << ',' << csv::escape(r.backbone) << ',' << r.task << ',' << r.comparison << ',' << r.metric << ','
        << csv::number(r.raw_mean_a) << ',' << csv::number(r.raw_mean_b) << ',' << csv::number(c.mean_a) << ','
        << csv::number(c.mean_b) << ',' << csv::number(c.delta_mean) << ',' << csv::number(c.p_value) << ','
        << csv::number(c.ci_low) << ',' << csv::number(c.ci_high) << ',' << csv::number(c.se) << ','
        << opt_number(c.iqr_persona) << ',' << c.n_personas << ',' << c.n_a << ',' << c.n_b << ','
        << (c.exhaustive ? 1 : 0) << ',' << (c.degenerate ? 1 : 0) << ','
        << opt_number(c.welch ? std::optional<double>(c.welch->t) : std::nullopt) << ','
        << opt_number(c.welch ? std::optional<double>(c.welch->df) : std::nullopt) << ','
        << opt_number(c.welch ? std::optional<double>(c.welch->p_value) : std::nullopt) << '\n';
  }
  return out.str();
}

std::string compare_output_json(const CompareOutput& output) {
  ojson doc;
  doc["schema_version"] = kSchemaVersion;
  doc["seed"] = output.seed;
  doc["resamples"] = output.resamples;
  doc["comparisons"] = ojson::array();
  for (const auto& r : output.comparisons) doc["comparisons"].push_back(result_json(r));
  doc["skipped"] = ojson::array();
  for (const auto& s : output.skipped) {
    doc["skipped"].push_back({{"family", s.family},
                              {"backbone", s.backbone},
                              {"task", s.task},
                              {"comparison", s.comparison},
                              {"metric", s.metric},
                              {"reason", s.reason}});
  }
  doc["consistency"] = ojson::array();
  for (const auto& c : output.consistency) {
    ojson j;
    j["backbone"] = c.backbone;
    j["task"] = c.task;
    j["condition"] = c.condition;
    j["score"] = c.score;
    j["n_cells"] = c.summary.cells.size();
    j["mean"] = c.summary.mean ? ojson(*c.summary.mean) : ojson(nullptr);
    j["std"] = c.summary.stddev ? ojson(*c.summary.stddev) : ojson(nullptr);
    j["skipped_cells"] = c.summary.skipped;
    j["cells"] = ojson::array();
    for (const auto& cell : c.summary.cells) {
      j["cells"].push_back({{"key", cell.key},
                            {"consistency", cell.consistency},
                            {"n_runs", cell.n_runs},
                            {"n_positive", cell.n_positive},
                            {"n_negative", cell.n_negative},
                            {"n_zero", cell.n_zero},
                            {"all_zero", cell.all_zero}});
    }
    doc["consistency"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

CompareOutput parse_compare_output_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::MalformedLine, "comparisons document is not JSON");
  CompareOutput out;
  try {
    out.seed = doc.value("seed", std::uint64_t{0});
    out.resamples = doc.value("resamples", std::size_t{0});
    for (const auto& j : doc.at("comparisons")) out.comparisons.push_back(result_from_json(j));
    if (doc.contains("skipped")) {
      for (const auto& j : doc.at("skipped")) {
        out.skipped.push_back({j.at("family").get<std::string>(), j.at("backbone").get<std::string>(),
                               j.at("task").get<std::string>(), j.at("comparison").get<std::string>(),
                               j.at("metric").get<std::string>(), j.at("reason").get<std::string>()});
      }
    }
    if (doc.contains("consistency")) {
      for (const auto& j : doc.at("consistency")) {
        ConsistencyRecord c;
        c.backbone = j.at("backbone").get<std::string>();
        c.task = j.at("task").get<std::string>();
        c.condition = j.at("condition").get<std::string>();
        c.score = j.at("score").get<std::string>();
        if (!j.at("mean").is_null()) c.summary.mean = j.at("mean").get<double>();
        if (!j.at("std").is_null()) c.summary.stddev = j.at("std").get<double>();
        c.summary.skipped = j.value("skipped_cells", std::vector<std::string>{});
        for (const auto& cj : j.at("cells")) {
          ConsistencyResult r;
          r.key = cj.at("key").get<std::string>();
          r.consistency = cj.at("consistency").get<double>();
          r.n_runs = cj.at("n_runs").get<std::size_t>();
          r.n_positive = cj.at("n_positive").get<std::size_t>();
          r.n_negative = cj.at("n_negative").get<std::size_t>();
          r.n_zero = cj.at("n_zero").get<std::size_t>();
          r.all_zero = cj.at("all_zero").get<bool>();
          c.summary.cells.push_back(std::move(r));
        }
        out.consistency.push_back(std::move(c));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedLine, std::string("comparisons document: ") + e.what());
  }
  return out;
}

CompareOutput run_compare(const RunOptions& o) {
  const auto trials = read_trials(o);
  CellMap cells;
  merge_cells(cells, csv::read(out_file(o, files::kCoding)));
  merge_cells(cells, csv::read(out_file(o, files::kWeb)));
  merge_cells(cells, csv::read(out_file(o, files::kConstructScores)));

  std::set<std::string> backbones;
  for (const auto& t : trials) backbones.insert(t.backbone);

  CompareOptions copt;
  copt.resamples = o.resamples;
  copt.workers = o.workers;

  CompareOutput out;
  out.seed = o.seed;
  out.resamples = o.resamples;
  std::uint64_t index = 0;
  const auto defs = comparison_defs(o);
  for (const auto& bb : backbones) {
    for (TaskType task : {TaskType::Web, TaskType::Coding}) {
      const auto specs = metric_specs(task);
      for (const auto& def : defs) {
        const bool family_present = std::any_of(trials.begin(), trials.end(), [&](const TrialInfo& t) {
          return t.backbone == bb && t.task == task && t.family == def.family;
        });
        if (!family_present) continue;
        for (const auto& spec : specs) {
          const std::uint64_t seed = substream_seed(o.seed, kCompareStream, index++);
          std::vector<double> va, vb, ra, rb;
          std::vector<std::string> pa, pb;
          for (const auto& t : trials) {
            if (t.backbone != bb || t.task != task) continue;
            const bool a = def.in_a(t), b = def.in_b(t);
            if (!a && !b) continue;
            const auto v = cell(cells, t.id, spec.value_column);
            const auto raw = cell(cells, t.id, spec.raw_column);
            if (!v || !raw) continue;
            (a ? va : vb).push_back(*v);
            (a ? ra : rb).push_back(*raw);
            (a ? pa : pb).push_back(t.persona);
          }
          ComparisonRecord rec{std::string(to_string(def.family)), bb, std::string(to_string(task)), def.name,
                               spec.label, 0.0, 0.0, seed, {}};
          try {
            copt.seed = seed;
            rec.result = compare(va, vb, pa, pb, copt);
            rec.raw_mean_a = mean(ra);
            rec.raw_mean_b = mean(rb);
            out.comparisons.push_back(std::move(rec));
          } catch (const Error& e) {
            if (e.code() != ErrorCode::TooFewTrials) throw;
            out.skipped.push_back({rec.family, bb, rec.task, def.name, spec.label, std::string(to_string(e.code()))});
          }
        }
      }
    }
  }

  // Within-task directional consistency: cells are (claim, condition) per
  // backbone and task; one signed value per repeated run.
  for (const auto& bb : backbones) {
    for (TaskType task : {TaskType::Web, TaskType::Coding}) {
      const std::vector<std::string> scores =
          task == TaskType::Web ? std::vector<std::string>{"dpc_act", "dpc_brd", "dpc_dpt"}
                                : std::vector<std::string>{"trs", "evs"};
      for (Family fam : {Family::OnTheFly, Family::Prefill}) {
        const Condition base = baseline_condition(fam, o);
        std::vector<const TrialInfo*> stratum;
        for (const auto& t : trials) {
          if (t.backbone == bb && t.task == task && t.family == fam) stratum.push_back(&t);
        }
        if (stratum.empty()) continue;
        for (const auto& score : scores) {
          // Reference level each run is measured against.
          std::map<std::string, std::pair<double, std::size_t>> persona_ref;
          std::pair<double, std::size_t> stratum_ref{0.0, 0};
          for (const TrialInfo* t : stratum) {
            const auto v = cell(cells, t->id, score);
            if (!v) continue;
            if (t->condition == base) {
              persona_ref[t->persona].first += *v;
              ++persona_ref[t->persona].second;
            } else {
              stratum_ref.first += *v;
              ++stratum_ref.second;
            }
          }
          const bool per_persona = task == TaskType::Web;
          for (Condition cond : kAllConditions) {
            if (cond == base || family_of(cond) != fam) continue;
            std::map<std::string, ConsistencyCell> by_claim;
            for (const TrialInfo* t : stratum) {
              if (t->condition != cond) continue;
              const auto v = cell(cells, t->id, score);
              if (!v) continue;
              double ref = 0.0;
              if (per_persona) {
                const auto it = persona_ref.find(t->persona);
                if (it == persona_ref.end()) continue;
                ref = it->second.first / static_cast<double>(it->second.second);
              } else {
                if (stratum_ref.second == 0) continue;
                ref = stratum_ref.first / static_cast<double>(stratum_ref.second);
              }
              auto& c = by_claim[t->claim_id];
              c.key = t->claim_id;
              c.values.push_back(*v - ref);
            }
            if (by_claim.empty()) continue;
            std::vector<ConsistencyCell> cell_list;
            for (auto& [claim, c] : by_claim) cell_list.push_back(std::move(c));
            out.consistency.push_back(
                {bb, std::string(to_string(task)), std::string(to_string(cond)), score, consistency(cell_list)});
          }
        }
      }
    }
  }

  ensure_dir(o.out);
  csv::write_text(out_file(o, files::kComparisonsJson), compare_output_json(out));
  csv::write_text(out_file(o, files::kComparisonsCsv), comparisons_csv(out.comparisons));
  std::ostringstream cc;
  cc << "backbone,task,condition,score,n_cells,mean,std\n";
  for (const auto& c : out.consistency) {
    cc << csv::escape(c.backbone) << ',' << c.task << ',' << c.condition << ',' << c.score << ','
       << c.summary.cells.size() << ',' << csv::number(c.summary.mean) << ',' << csv::number(c.summary.stddev)
       << '\n';
  }
  csv::write_text(out_file(o, files::kConsistencyCsv), cc.str());
  return out;
}

// ---------------------------------------------------------------- report

std::vector<std::string> headline_lines(std::span<const ComparisonRecord> records) {
  std::map<std::pair<std::string, std::string>, std::pair<const ComparisonRecord*, const ComparisonRecord*>> found;
  for (const auto& r : records) {
    if (r.comparison != "B-C0P") continue;
    auto& slot = found[{r.backbone, r.task}];
    if (r.metric == "num_searches") slot.first = &r;
    if (r.metric == "num_unique_urls") slot.second = &r;
  }
  std::vector<std::string> lines;
  for (const auto& [key, pair] : found) {
    if (!pair.first || !pair.second) continue;
    lines.push_back(key.first + " " + key.second);
    lines.push_back(fmt::format("searches: {:.1f}%, unique URLs: {:.1f}%",
                                percent_change(pair.first->raw_mean_a, pair.first->raw_mean_b),
                                percent_change(pair.second->raw_mean_a, pair.second->raw_mean_b)));
  }
  return lines;
}

namespace {

std::string f3(double v) { return fmt::format("{:.3f}", v); }
std::string fp(double p) { return p < 1e-4 ? std::string("<0.0001") : fmt::format("{:.4f}", p); }
std::string fopt(const std::optional<double>& v) { return v ? f3(*v) : std::string("-"); }

struct Section {
  std::string id;     // file stem for csv output
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> md_rows;   // rounded for display
  std::vector<std::vector<std::string>> csv_rows;  // full precision
};

std::string section_markdown(const Section& s) {
  std::ostringstream out;
  out << "## " << s.title << "\n\n";
  if (s.md_rows.empty()) {
    out << "no cells\n\n";
    return out.str();
  }
  out << '|';
  for (const auto& h : s.header) out << ' ' << h << " |";
  out << "\n|";
  for (std::size_t i = 0; i < s.header.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& row : s.md_rows) {
    out << '|';
    for (const auto& c : row) out << ' ' << c << " |";
    out << '\n';
  }
  out << '\n';
  return out.str();
}

std::string section_csv(const Section& s) {
  std::ostringstream out;
  for (std::size_t i = 0; i < s.header.size(); ++i) out << (i ? "," : "") << csv::escape(s.header[i]);
  out << '\n';
  for (const auto& row : s.csv_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv::escape(row[i]);
    out << '\n';
  }
  return out.str();
}

Section delta_section(std::string id, std::string title, std::span<const ComparisonRecord> records,
                      const std::string& task, const std::string& comparison) {
  Section s{std::move(id), std::move(title),
            {"backbone", "metric", "n_a", "n_b", "delta", "ci_low", "ci_high", "p", "iqr_persona"}, {}, {}};
  for (const auto& r : records) {
    if (r.task != task || r.comparison != comparison) continue;
    const auto& c = r.result;
    s.md_rows.push_back({r.backbone, r.metric, std::to_string(c.n_a), std::to_string(c.n_b), f3(c.delta_mean),
                         f3(c.ci_low), f3(c.ci_high), fp(c.p_value), fopt(c.iqr_persona)});
    s.csv_rows.push_back({r.backbone, r.metric, std::to_string(c.n_a), std::to_string(c.n_b),
                          csv::number(c.delta_mean), csv::number(c.ci_low), csv::number(c.ci_high),
                          csv::number(c.p_value), csv::number(c.iqr_persona)});
  }
  return s;
}

Section prefill_section(std::span<const ComparisonRecord> records) {
  Section s{"prefill_effects",
            "Prefilled belief effects",
            {"backbone", "task", "metric", "baseline", "B", "NB", "delta", "ci_low", "ci_high", "p", "delta_B_NB",
             "p_B_NB"},
            {},
            {}};
  std::map<std::tuple<std::string, std::string, std::string>, std::array<const ComparisonRecord*, 3>> rows;
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  for (const auto& r : records) {
    int slot = r.comparison == "B-C0P" ? 0 : r.comparison == "NB-C0P" ? 1 : r.comparison == "B-NB" ? 2 : -1;
    if (slot < 0) continue;
    const auto key = std::make_tuple(r.backbone, r.task, r.metric);
    if (!rows.contains(key)) {
      rows[key] = {nullptr, nullptr, nullptr};
      order.push_back(key);
    }
    rows[key][static_cast<std::size_t>(slot)] = &r;
  }
  for (const auto& key : order) {
    const auto& [b_c0p, nb_c0p, b_nb] = rows[key];
    if (!b_c0p) continue;
    const auto& c = b_c0p->result;
    const std::optional<double> nb = nb_c0p ? std::optional<double>(nb_c0p->raw_mean_a) : std::nullopt;
    const std::optional<double> d_bnb = b_nb ? std::optional<double>(b_nb->result.delta_mean) : std::nullopt;
    const std::optional<double> p_bnb = b_nb ? std::optional<double>(b_nb->result.p_value) : std::nullopt;
    s.md_rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), f3(b_c0p->raw_mean_b),
                         f3(b_c0p->raw_mean_a), fopt(nb), f3(c.delta_mean), f3(c.ci_low), f3(c.ci_high),
                         fp(c.p_value), fopt(d_bnb), p_bnb ? fp(*p_bnb) : "-"});
    s.csv_rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), csv::number(b_c0p->raw_mean_b),
                          csv::number(b_c0p->raw_mean_a), csv::number(nb), csv::number(c.delta_mean),
                          csv::number(c.ci_low), csv::number(c.ci_high), csv::number(c.p_value), csv::number(d_bnb),
                          csv::number(p_bnb)});
  }
  return s;
}

Section consistency_section(std::span<const ConsistencyRecord> records) {
  Section s{"consistency",
            "Within-task directional consistency",
            {"backbone", "task", "condition", "score", "cells", "mean", "std"},
            {},
            {}};
  for (const auto& c : records) {
    s.md_rows.push_back({c.backbone, c.task, c.condition, c.score, std::to_string(c.summary.cells.size()),
                         fopt(c.summary.mean), fopt(c.summary.stddev)});
    s.csv_rows.push_back({c.backbone, c.task, c.condition, c.score, std::to_string(c.summary.cells.size()),
                          csv::number(c.summary.mean), csv::number(c.summary.stddev)});
  }
  return s;
}

}  // namespace

void run_report(const RunOptions& o) {
  const CompareOutput cmp = parse_compare_output_json(read_text(out_file(o, files::kComparisonsJson)));
  std::optional<OutcomeTable> outcomes;
  {
    std::error_code ec;
    const fs::path p = out_file(o, files::kOutcomesJson);
    if (fs::exists(p, ec)) {
      const auto j = nlohmann::json::parse(read_text(p), nullptr, false);
      if (j.is_discarded()) throw Error(ErrorCode::MalformedLine, "outcomes.json is not JSON");
      try {
        outcomes = outcome_table_from_json(j);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedLine, std::string("outcomes.json: ") + e.what());
      }
    }
  }
  ensure_dir(o.out);

  std::vector<Section> sections;
  sections.push_back(delta_section("coding_p_np", "Coding deltas, persuaded vs non-persuaded", cmp.comparisons,
                                   "coding", "P-NP"));
  sections.push_back(delta_section("web_p_np", "Web deltas, persuaded vs non-persuaded", cmp.comparisons, "web",
                                   "P-NP"));
  sections.push_back(prefill_section(cmp.comparisons));
  sections.push_back(consistency_section(cmp.consistency));

  const auto headline = headline_lines(cmp.comparisons);
  std::string headline_text;
  for (const auto& l : headline) headline_text += l + "\n";
  if (headline.empty()) headline_text = "no cells\n";
  csv::write_text(out_file(o, files::kHeadline), headline_text);

  const bool wide = outcomes && outcomes->group_by.size() == 2 && outcomes->group_by[0] == GroupKey::Backbone &&
                    outcomes->group_by[1] == GroupKey::Tactic;

  if (o.wants("md")) {
    std::ostringstream md;
    md << "# driftlab report\n\n";
    md << "## Headline\n\n" << headline_text << '\n';
    md << "## Persuasion outcomes\n\n";
    if (!outcomes || outcomes->rows.empty()) {
      md << "no cells\n\n";
    } else if (wide) {
      md << outcome_table_wide_markdown(*outcomes) << '\n';
    } else {
      md << "```\n" << outcome_table_csv(*outcomes) << "```\n\n";
    }
    for (const auto& s : sections) md << section_markdown(s);
    if (!cmp.skipped.empty()) {
      md << "## Skipped comparisons\n\n";
      for (const auto& s : cmp.skipped) {
        md << "- " << s.backbone << ' ' << s.task << ' ' << s.comparison << ' ' << s.metric << ": " << s.reason << '\n';
      }
      md << '\n';
    }
    csv::write_text(out_file(o, files::kReportMd), md.str());
  }
  if (o.wants("csv")) {
    if (outcomes) {
      csv::write_text(out_file(o, "report_outcomes.csv"),
                      wide ? outcome_table_wide_csv(*outcomes) : outcome_table_csv(*outcomes));
    }
    for (const auto& s : sections) csv::write_text(out_file(o, "report_" + s.id + ".csv"), section_csv(s));
  }
  if (o.wants("json")) {
    ojson j;
    j["schema_version"] = kSchemaVersion;
    j["headline"] = headline;
    j["outcomes"] = outcomes ? outcome_table_to_json(*outcomes) : ojson(nullptr);
    j["tables"] = ojson::object();
    for (const auto& s : sections) {
      ojson t;
      t["title"] = s.title;
      t["header"] = s.header;
      t["rows"] = s.csv_rows;
      j["tables"][s.id] = std::move(t);
    }
    csv::write_text(out_file(o, files::kReportJson), j.dump(2) + "\n");
  }
}

}  // namespace driftlab
