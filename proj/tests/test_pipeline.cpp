#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "driftlab/coding_metrics.hpp"
#include "driftlab/constructs.hpp"
#include "driftlab/csv.hpp"
#include "driftlab/error.hpp"
#include "driftlab/pipeline.hpp"
#include "driftlab/web_metrics.hpp"
#include "support.hpp"

using namespace driftlab;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(DRIFTLAB_CLI) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ComparisonRecord record(const std::string& metric, double a, double b) {
  ComparisonRecord r;
  r.family = "prefill";
  r.backbone = "gpt-4.1-nano";
  r.task = "web";
  r.comparison = "B-C0P";
  r.metric = metric;
  r.raw_mean_a = a;
  r.raw_mean_b = b;
  r.result.mean_a = a;
  r.result.mean_b = b;
  r.result.delta_mean = a - b;
  r.result.p_value = 0.004;
  return r;
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("validate exit codes") {
  const auto dir = testing::temp_dir("cli_validate");
  std::vector<TrialRecord> good{testing::web_trial("g", Condition::C0P, {{'s', "q"}})};
  write_trace_file(dir / "good.jsonl", good);
  CHECK(run_cli("validate --traces " + (dir / "good.jsonl").string(), dir / "o1.txt") == 0);
  CHECK(testing::slurp(dir / "o1.txt").find("0 violations") != std::string::npos);

  auto bad = testing::web_trial("b", Condition::B, {{'s', "q"}});
  bad.events.insert(bad.events.begin(), TraceEvent{0.0, event::StanceProbe{ProbePhase::Initial, Stance::A, "(A)"}});
  std::vector<TrialRecord> both{good[0], bad};
  write_trace_file(dir / "bad.jsonl", both);
  CHECK(run_cli("validate --traces " + (dir / "bad.jsonl").string(), dir / "o2.txt") == 1);
  const auto text = testing::slurp(dir / "o2.txt");
  CHECK(text.find("prefill_no_probes") != std::string::npos);
  CHECK(text.find("1 violations") != std::string::npos);

  CHECK(run_cli("validate --traces " + (dir / "nothing.jsonl").string(), dir / "o3.txt") == 3);
  CHECK(run_cli("validate", dir / "o4.txt") == 2);
  CHECK(run_cli("frobnicate", dir / "o5.txt") == 2);
  CHECK(run_cli("report --out " + dir.string() + " --format pdf", dir / "o6.txt") == 2);
  CHECK(run_cli("compare --out " + dir.string() + " --baseline B", dir / "o7.txt") == 2);
  CHECK(run_cli("aggregate --out " + (dir / "empty").string(), dir / "o8.txt") == 3);
  CHECK(run_cli("report --out " + (dir / "empty").string(), dir / "o9.txt") == 3);
  fs::remove_all(dir);
}

TEST_CASE("golden headline") {
  const auto dir = testing::temp_dir("golden");
  CompareOutput in;
  in.comparisons = {record("num_searches", 3.180, 4.348), record("num_unique_urls", 4.380, 5.268)};
  csv::write_text(dir / std::string(files::kComparisonsJson), compare_output_json(in));
  CHECK(run_cli("report --out " + dir.string(), dir / "log.txt") == 0);
  CHECK(testing::slurp(dir / std::string(files::kHeadline)) ==
        "gpt-4.1-nano web\nsearches: -26.9%, unique URLs: -16.9%\n");
  const auto lines = headline_lines(in.comparisons);
  REQUIRE(lines.size() == 2);
  CHECK(lines[1] == "searches: -26.9%, unique URLs: -16.9%");
  fs::remove_all(dir);
}

TEST_CASE("empty comparison set gives a no-cells report") {
  const auto dir = testing::temp_dir("empty");
  csv::write_text(dir / std::string(files::kComparisonsJson), compare_output_json(CompareOutput{}));
  CHECK(run_cli("report --out " + dir.string() + " --format md,json", dir / "log.txt") == 0);
  CHECK(testing::slurp(dir / std::string(files::kHeadline)) == "no cells\n");
  CHECK(testing::slurp(dir / std::string(files::kReportMd)).find("no cells") != std::string::npos);
  CHECK(!fs::exists(dir / "report_prefill_effects.csv"));
  fs::remove_all(dir);
}

TEST_CASE("compare output document round trips") {
  CompareOutput in;
  in.seed = 5;
  in.resamples = 100;
  auto r = record("num_searches", 1, 2);
  r.result.iqr_persona = 0.25;
  r.result.welch = WelchResult{1.5, 10.25, 0.17};
  in.comparisons = {r};
  in.skipped = {{"prefill", "bb", "coding", "B-C0P", "trs", "TooFewTrials"}};
  ConsistencyRecord c{"bb", "web", "B", "dpc_act", {}};
  c.summary.cells = {{"claim-01", 0.75, 4, 3, 1, 0, false}};
  c.summary.mean = 0.75;
  in.consistency = {c};
  const auto text = compare_output_json(in);
  CHECK(compare_output_json(parse_compare_output_json(text)) == text);
  CHECK_THROWS_AS(parse_compare_output_json("{"), Error);
}

TEST_CASE("option parsing") {
  CHECK(parse_formats("md, json") == std::vector<std::string>{"md", "json"});
  CHECK_THROWS_AS(parse_formats(""), Error);
  CHECK(parse_group_by("persona,tactic") == std::vector<GroupKey>{GroupKey::Persona, GroupKey::Tactic});
  CHECK_THROWS_AS(parse_group_by("tactic,tactic"), Error);
  RunOptions o;
  o.baseline = Condition::C0;
  CHECK(baseline_condition(Family::OnTheFly, o) == Condition::C0);
  CHECK(baseline_condition(Family::Prefill, o) == Condition::C0P);
  o.baseline = Condition::NB;
  CHECK_THROWS_AS(baseline_condition(Family::OnTheFly, o), Error);
}

TEST_CASE("full corpus: stage files equal module API values, reruns are byte identical") {
  const auto dir = testing::temp_dir("e2e");
  auto config = SimConfig::defaults();
  for (auto& [cond, n] : config.trials) n = 12;
  config.master_seed = 3;
  config.belief_effect = {{"num_searches", -1.2}};
  csv::write_text(dir / "sim.json", sim_config_json(config));

  const auto run_all = [&](const fs::path& out) {
    CHECK(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " + (out / "traces").string(),
                  dir / "log.txt") == 0);
    CHECK(run_cli("validate --traces " + (out / "traces").string(), dir / "log.txt") == 0);
    CHECK(run_cli("metrics --traces " + (out / "traces").string() + " --out " + (out / "res").string(),
                  dir / "log.txt") == 0);
    CHECK(run_cli("aggregate --out " + (out / "res").string(), dir / "log.txt") == 0);
    CHECK(run_cli("compare --resamples 500 --seed 9 --workers 2 --out " + (out / "res").string(), dir / "log.txt") == 0);
    CHECK(run_cli("report --out " + (out / "res").string(), dir / "log.txt") == 0);
  };
  run_all(dir / "a");
  run_all(dir / "b");
  const auto fa = files_under(dir / "a"), fb = files_under(dir / "b");
  REQUIRE(fa == fb);
  CHECK(fa.size() > 20);
  for (const auto& f : fa) CHECK_MESSAGE(testing::slurp(dir / "a" / f) == testing::slurp(dir / "b" / f), f.string());

  // Metric files against direct module calls.
  const fs::path res = dir / "a" / "res";
  const auto parsed = parse_trace_path(dir / "a" / "traces");
  std::vector<WebTrialInput> prefill_web;
  std::set<std::string> tools;
  for (const auto& t : parsed.trials) {
    if (t.header.task_type != TaskType::Web) continue;
    auto raw = extract_web_raw(t);
    for (const auto& [k, v] : raw.tool_counts) tools.insert(k);
    if (is_prefill(t.header.condition))
      prefill_web.push_back({t.header.trial_id, t.header.persona, t.header.condition == Condition::C0P, raw});
  }
  const auto direct = score_web_stratum("sim-backbone", prefill_web, {tools.begin(), tools.end()});
  const auto web = csv::read(res / std::string(files::kWeb));
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < web.rows.size(); ++i) row_of[web.rows[i][0]] = i;
  for (const auto& row : direct.rows) {
    const auto& cells = web.rows.at(row_of.at(row.trial_id));
    for (std::size_t m = 0; m < kWebMetrics.size(); ++m) {
      const auto col = web.column("d_" + std::string(to_string(kWebMetrics[m])));
      CHECK(csv::to_optional_double(cells[col]) == row.deltas[m]);
    }
  }

  // Construct scores against a direct fit on the same stratum.
  DeltaMatrix dm;
  for (WebMetric m : kWebMetrics) dm.columns.emplace_back(to_string(m));
  for (const auto& row : direct.rows) {
    dm.trial_ids.push_back(row.trial_id);
    dm.rows.emplace_back(row.deltas.begin(), row.deltas.end());
  }
  const auto fit = fit_construct_pca(dm, ConstructMap::defaults(), "sim-backbone/prefill");
  const auto cs = csv::read(res / std::string(files::kConstructScores));
  std::map<std::string, std::vector<std::string>> cs_rows;
  for (const auto& r : cs.rows) cs_rows[r[0]] = r;
  for (const auto& s : fit.scores) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(csv::to_optional_double(cs_rows.at(s.trial_id)[k + 1]) == s.dpc[k]);
  }

  // Every comparison record reproduces from its inputs and seed; report cells match the records.
  const auto cmp = parse_compare_output_json(testing::slurp(res / std::string(files::kComparisonsJson)));
  const auto trials_csv = csv::read(res / std::string(files::kTrials));
  std::map<std::string, std::vector<std::string>> trial_rows;
  for (const auto& r : trials_csv.rows) trial_rows[r[0]] = r;
  const auto pref = csv::read(res / "report_prefill_effects.csv");
  std::size_t checked = 0;
  for (const auto& rec : cmp.comparisons) {
    if (rec.task != "web" || (rec.comparison != "B-C0P" && rec.comparison != "NB-C0P")) continue;
    const std::string cond_a = rec.comparison.substr(0, rec.comparison.find('-'));
    std::vector<double> a, b;
    std::vector<std::string> pa, pb;
    const bool construct = rec.metric.rfind("dpc_", 0) == 0;
    const auto& table = construct ? cs : web;
    const std::size_t col = table.column(construct ? rec.metric : "d_" + rec.metric);
    for (const auto& r : table.rows) {
      const auto& tr = trial_rows.at(r[0]);
      const std::string cond = tr[trials_csv.column("condition")];
      const auto v = csv::to_optional_double(r[col]);
      if (!v) continue;
      if (cond == cond_a) {
        a.push_back(*v);
        pa.push_back(tr[trials_csv.column("persona")]);
      } else if (cond == "C0P") {
        b.push_back(*v);
        pb.push_back(tr[trials_csv.column("persona")]);
      }
    }
    CompareOptions o;
    o.resamples = 500;
    o.seed = rec.seed;
    const auto expect = compare(a, b, pa, pb, o);
    CHECK(expect.delta_mean == rec.result.delta_mean);
    CHECK(expect.p_value == rec.result.p_value);
    CHECK(expect.ci_low == rec.result.ci_low);
    CHECK(expect.ci_high == rec.result.ci_high);
    CHECK(expect.iqr_persona == rec.result.iqr_persona);
    if (rec.comparison == "B-C0P") {
      bool found = false;
      for (const auto& r : pref.rows) {
        if (r[pref.column("metric")] != rec.metric || r[pref.column("task")] != "web") continue;
        found = true;
        CHECK(csv::to_double(r[pref.column("delta")]) == rec.result.delta_mean);
        CHECK(csv::to_double(r[pref.column("p")]) == rec.result.p_value);
        CHECK(csv::to_double(r[pref.column("ci_low")]) == rec.result.ci_low);
        CHECK(csv::to_double(r[pref.column("B")]) == rec.raw_mean_a);
        CHECK(csv::to_double(r[pref.column("baseline")]) == rec.raw_mean_b);
      }
      CHECK(found);
    }
    ++checked;
  }
  CHECK(checked == 32);

  // report is a pure function of its inputs
  const auto before = testing::slurp(res / std::string(files::kReportMd));
  CHECK(run_cli("report --out " + res.string(), dir / "log.txt") == 0);
  CHECK(testing::slurp(res / std::string(files::kReportMd)) == before);
  fs::remove_all(dir);
}

TEST_CASE("irrelevance summary is written when an embedding sidecar is present") {
  const auto dir = testing::temp_dir("irr");
  std::vector<TrialRecord> trials{testing::web_trial("w", Condition::C0P, {{'s', "q"}})};
  write_trace_file(dir / "t.jsonl", trials);
  std::vector<EmbeddingPair> pairs{{"w", "claim-01", {1, 0}, {1, 1}}};
  write_embedding_sidecar(dir / "embeddings.jsonl", pairs);
  RunOptions o;
  o.traces = dir;
  o.out = dir / "out";
  const auto s = run_metrics(o);
  CHECK(s.trials == 1);
  const auto j = nlohmann::json::parse(testing::slurp(dir / "out" / std::string(files::kIrrelevance)));
  CHECK(j.at("mean").get<double>() == doctest::Approx(1.0 / std::sqrt(2.0)));
  fs::remove_all(dir);
}
