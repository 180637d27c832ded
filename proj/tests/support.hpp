#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "driftlab/trace_model.hpp"

namespace testing {

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("driftlab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline driftlab::TrialHeader header(std::string id, driftlab::Condition c, driftlab::TaskType task,
                                    std::string persona = "GPT",
                                    driftlab::Tactic tactic = driftlab::Tactic::Baseline) {
  driftlab::TrialHeader h;
  h.trial_id = std::move(id);
  h.backbone = "bb";
  h.persona = std::move(persona);
  h.tactic = tactic;
  h.condition = c;
  h.task_type = task;
  h.claim_id = "claim-01";
  h.distractor_count = driftlab::is_prefill(c) ? 0 : 1;
  h.seed = 1;
  return h;
}

inline void add_probes(driftlab::TrialRecord& r, driftlab::Stance i, driftlab::Stance p, driftlab::Stance f,
                       double& t) {
  using namespace driftlab;
  auto txt = [](Stance s) { return s == Stance::A ? std::string("(A) x") : std::string("(B) x"); };
  r.events.push_back({t++, event::StanceProbe{ProbePhase::Initial, i, txt(i)}});
  if (r.header.condition != Condition::C0) {
    r.events.push_back({t++, event::Injection{r.header.condition == Condition::C2 ? InjectionKind::Persuasive
                                                                                   : InjectionKind::Neutral,
                                              "inj"}});
    r.events.push_back({t++, event::Commitment{}});
  }
  r.events.push_back({t++, event::StanceProbe{ProbePhase::Post, p, txt(p)}});
  for (std::uint64_t k = 0; k < r.header.distractor_count; ++k) r.events.push_back({t++, event::Distractor{k}});
  r.events.push_back({t++, event::StanceProbe{ProbePhase::Final, f, txt(f)}});
}

/// A coding trial: revisions with the given sizes, each followed 2 s later by
/// an execution, 1 s apart.
inline driftlab::TrialRecord coding_trial(const std::string& id, driftlab::Condition c,
                                          const std::vector<std::uint64_t>& sizes, const std::string& persona = "GPT") {
  using namespace driftlab;
  TrialRecord r{header(id, c, TaskType::Coding, persona), {}};
  double t = 0.0;
  if (is_prefill(c)) {
    r.events.push_back({t++, event::Injection{InjectionKind::Neutral, "pre"}});
  } else {
    add_probes(r, Stance::A, Stance::A, Stance::A, t);
  }
  r.events.push_back({t, event::TaskStart{}});
  for (auto s : sizes) {
    t += 1.0;
    r.events.push_back({t, event::CodeRevision{s}});
    t += 2.0;
    r.events.push_back({t, event::CodeExec{true}});
  }
  t += 1.0;
  r.events.push_back({t, event::TaskEnd{TaskStatus::Completed}});
  return r;
}

struct WebStep {
  char kind;  // 's' search, 'v' visit, 'm' summarize, 't' tool
  std::string arg;
};

inline driftlab::TrialRecord web_trial(const std::string& id, driftlab::Condition c, const std::vector<WebStep>& steps,
                                       const std::string& persona = "GPT") {
  using namespace driftlab;
  TrialRecord r{header(id, c, TaskType::Web, persona), {}};
  double t = 0.0;
  if (is_prefill(c)) {
    r.events.push_back({t++, event::Injection{InjectionKind::Neutral, "pre"}});
  } else {
    add_probes(r, Stance::A, Stance::A, Stance::A, t);
  }
  r.events.push_back({t, event::TaskStart{}});
  for (const auto& s : steps) {
    t += 1.0;
    switch (s.kind) {
      case 's': r.events.push_back({t, event::Search{s.arg}}); break;
      case 'v': {
        const std::string url = "https://" + s.arg;
        r.events.push_back({t, event::Visit{url, registrable_domain(url)}});
        break;
      }
      case 'm': r.events.push_back({t, event::Summarize{}}); break;
      default: r.events.push_back({t, event::ToolCall{s.arg}}); break;
    }
  }
  t += 1.0;
  r.events.push_back({t, event::TaskEnd{TaskStatus::Completed}});
  return r;
}

}  // namespace testing
