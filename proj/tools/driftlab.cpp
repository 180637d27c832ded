#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "driftlab/error.hpp"
#include "driftlab/pipeline.hpp"
#include "driftlab/sim_harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;

int exit_code_for(driftlab::ErrorCode code) {
  using driftlab::ErrorCode;
  switch (code) {
    case ErrorCode::IoFailure:
    case ErrorCode::MissingUpstream: return kIo;
    case ErrorCode::UsageError: return kUsage;
    default: return kValidation;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("driftlab");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%^%l%$: %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("DRIFTLAB_LOG")) spdlog::cfg::helpers::load_levels(lvl);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"driftlab: agent trace drift analytics"};
  app.require_subcommand(1);

  std::string traces, config_path, out = "driftlab_out", baseline = "C1", group_by = "backbone,tactic",
                                   formats = "csv,md,json";
  std::optional<std::uint64_t> seed;
  std::size_t resamples = 10000;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());

  auto* validate = app.add_subcommand("validate", "check trace files against the schema");
  validate->add_option("--traces", traces, "trace file or directory")->required();

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic corpus with known effects");
  simulate->add_option("--config", config_path, "simulator config (JSON)");
  simulate->add_option("--out", out, "output directory");
  simulate->add_option("--seed", seed, "master seed, overrides the config");

  auto* metrics = app.add_subcommand("metrics", "per-trial stance, coding and web metrics");
  metrics->add_option("--traces", traces, "trace file or directory")->required();
  metrics->add_option("--out", out, "output directory");
  metrics->add_option("--baseline", baseline, "on-the-fly reference: C0, C1 (or C0P)");

  auto* aggregate = app.add_subcommand("aggregate", "construct scores and outcome tables");
  aggregate->add_option("--out", out, "output directory (reads metrics files)");
  aggregate->add_option("--group-by", group_by, "outcome grouping keys");

  auto* compare = app.add_subcommand("compare", "population comparisons and consistency");
  compare->add_option("--out", out, "output directory (reads metrics and aggregate files)");
  compare->add_option("--seed", seed, "resampling seed");
  compare->add_option("--resamples", resamples, "permutation/bootstrap resamples")->check(CLI::PositiveNumber);
  compare->add_option("--baseline", baseline, "on-the-fly reference: C0, C1 (or C0P)");

  auto* report = app.add_subcommand("report", "render tables and headline");
  report->add_option("--out", out, "output directory (reads compare files)");
  report->add_option("--format", formats, "comma list of csv, md, json");

  for (auto* sub : {simulate, metrics, compare}) sub->add_option("--workers", workers, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    driftlab::RunOptions opts;
    opts.traces = traces;
    opts.out = out;
    opts.seed = seed.value_or(0);
    opts.resamples = resamples;
    opts.workers = workers;
    const auto cond = driftlab::parse_condition(baseline);
    if (!cond) throw driftlab::Error(driftlab::ErrorCode::UsageError, "unknown baseline '" + baseline + "'");
    opts.baseline = *cond;
    driftlab::baseline_condition(driftlab::Family::OnTheFly, opts);
    opts.group_by = driftlab::parse_group_by(group_by);
    opts.formats = driftlab::parse_formats(formats);

    if (*validate) {
      const auto rep = driftlab::run_validate(opts.traces);
      std::cout << driftlab::render_validate(rep);
      return rep.violations.empty() ? kOk : kValidation;
    }
    if (*simulate) {
      auto config = config_path.empty() ? driftlab::SimConfig::defaults() : driftlab::read_sim_config(config_path);
      if (seed) config.master_seed = *seed;
      config.check();
      driftlab::run_simulate(config, opts.out, workers);
      return kOk;
    }
    if (*metrics) {
      const auto s = driftlab::run_metrics(opts);
      std::cout << s.trials << " trials (" << s.web_trials << " web, " << s.coding_trials << " coding), " << s.flagged
                << " flagged, " << s.rejected << " rejected\n";
      return kOk;
    }
    if (*aggregate) {
      driftlab::run_aggregate(opts);
      return kOk;
    }
    if (*compare) {
      const auto r = driftlab::run_compare(opts);
      std::cout << r.comparisons.size() << " comparisons, " << r.skipped.size() << " skipped\n";
      return kOk;
    }
    if (*report) {
      driftlab::run_report(opts);
      return kOk;
    }
  } catch (const driftlab::Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kIo;
  }
  return kUsage;
}
