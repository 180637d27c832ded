#include "driftlab/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "driftlab/error.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::uint64_t kTrialStream = 0x7472'6961'6cULL;

constexpr std::string_view kQueryTerms[] = {"evidence", "review", "study",   "data", "policy",
                                            "impact",   "risk",   "history", "cost", "trend"};

double r3(double x) { return std::round(x * 1000.0) / 1000.0; }

[[noreturn]] void out_of_range(const std::string& what) { throw Error(ErrorCode::ConfigOutOfRange, what); }

double effect(const std::map<std::string, double>& e, const char* key) {
  const auto it = e.find(key);
  return it == e.end() ? 0.0 : it->second;
}

WebParams shifted(WebParams p, const std::map<std::string, double>& e) {
  p.searches_mean += effect(e, "num_searches");
  p.domains_mean += effect(e, "num_domains");
  p.unique_urls_mean += effect(e, "num_unique_urls");
  p.revisits_mean += effect(e, "num_revisits");
  p.summaries_mean += effect(e, "num_summaries");
  p.tool_calls_mean += effect(e, "num_tool_calls");
  p.duration_mean_s += effect(e, "total_duration_s");
  return p;
}

CodingParams shifted(CodingParams p, const std::map<std::string, double>& e) {
  p.revisions_mean += effect(e, "nr");
  p.revision_size_mean += effect(e, "ms");
  p.think_gap_mean_s += effect(e, "think_gap_s");
  p.exec_latency_mean_s += effect(e, "exec_latency_s");
  return p;
}

void check_params(const WebParams& w, const CodingParams& c, const std::string& where) {
  const auto need = [&](bool ok, const char* field) {
    if (!ok) out_of_range(where + ": " + field + " out of range");
  };
  need(w.searches_mean >= 0.0, "searches_mean");
  need(w.domains_mean >= 1.0, "domains_mean");
  need(w.unique_urls_mean >= w.domains_mean, "unique_urls_mean");
  need(w.revisits_mean >= 0.0, "revisits_mean");
  need(w.summaries_mean >= 0.0, "summaries_mean");
  need(w.tool_calls_mean >= 0.0, "tool_calls_mean");
  need(w.duration_mean_s > 0.0, "duration_mean_s");
  need(w.duration_sigma >= 0.0, "duration_sigma");
  need(c.revisions_mean >= 1.0, "revisions_mean");
  need(c.revision_size_mean >= 1.0, "revision_size_mean");
  need(c.think_gap_mean_s > 0.0, "think_gap_mean_s");
  need(c.exec_latency_mean_s > 0.0, "exec_latency_mean_s");
  need(c.latency_sigma >= 0.0, "latency_sigma");
}

// Per-trial generation plan, fixed before any draw.
struct TrialPlan {
  std::size_t index = 0;
  std::string backbone;
  std::size_t persona = 0;
  TaskType task = TaskType::Web;
  Condition condition = Condition::C0;
  std::size_t replicate = 0;
};

class TrialGenerator {
 public:
  explicit TrialGenerator(const SimConfig& config) : config_(config) {}

  SimOutcome generate(const TrialPlan& plan) const {
    const PersonaParams& persona = config_.personas[plan.persona];
    Rng rng(substream_seed(config_.master_seed, kTrialStream, plan.index));

    SimOutcome out;
    TrialHeader& h = out.trial.header;
    h.trial_id = fmt::format("{}-{}-{}-{}-{:04}", plan.backbone, to_string(plan.task), to_string(plan.condition),
                             persona.name, plan.replicate);
    h.backbone = plan.backbone;
    h.persona = persona.name;
    h.condition = plan.condition;
    h.task_type = plan.task;
    h.tactic = plan.condition == Condition::C2 ? config_.tactics[plan.replicate % config_.tactics.size()]
                                               : Tactic::Baseline;
    h.claim_id = config_.claim_ids[plan.replicate % config_.claim_ids.size()];
    h.distractor_count = is_prefill(plan.condition) ? 0 : config_.distractor_count;
    h.seed = substream_seed(config_.master_seed, kTrialStream, plan.index);
    h.schema_version = kSchemaVersion;

    auto& ev = out.trial.events;
    double t = 0.0;
    if (is_prefill(plan.condition)) {
      const InjectionKind kind = plan.condition == Condition::C0P ? InjectionKind::Neutral : InjectionKind::Persuasive;
      const char* tmpl = plan.condition == Condition::C0P  ? "prefill_neutral"
                         : plan.condition == Condition::B ? "prefill_belief"
                                                          : "prefill_disbelief";
      ev.push_back({t, event::Injection{kind, fmt::format("{{{}:{}}}", tmpl, h.claim_id)}});
      if (plan.condition == Condition::B) out.applied_effect = config_.belief_effect;
      if (plan.condition == Condition::NB) out.applied_effect = config_.disbelief_effect;
    } else {
      const Stance initial = rng.bernoulli(0.5) ? Stance::A : Stance::B;
      const Stance flipped = initial == Stance::A ? Stance::B : Stance::A;
      Stance post = initial, final = initial;
      if (plan.condition == Condition::C2) {
        const bool persuaded = rng.bernoulli(config_.susceptibility_of(persona.name, h.tactic));
        const bool fades = rng.bernoulli(config_.fade_probability);
        if (persuaded) {
          post = final = flipped;
          out.persuaded = true;
          out.applied_effect = config_.belief_effect;
        } else if (fades) {
          post = flipped;
        }
      }
      const auto probe = [&](ProbePhase phase, Stance s) {
        ev.push_back({t, event::StanceProbe{phase, s, fmt::format("({}) {{probe_response:{}}}", to_string(s),
                                                                   h.claim_id)}});
        t += 1.0;
      };
      probe(ProbePhase::Initial, initial);
      if (plan.condition != Condition::C0) {
        const bool persuasive = plan.condition == Condition::C2;
        ev.push_back({t, event::Injection{persuasive ? InjectionKind::Persuasive : InjectionKind::Neutral,
                                          persuasive ? fmt::format("{{injection_persuasive:{}:{}}}",
                                                                   to_string(h.tactic), h.claim_id)
                                                     : fmt::format("{{injection_neutral:{}}}", h.claim_id)}});
        t += 1.0;
        ev.push_back({t, event::Commitment{}});
        t += 1.0;
      }
      probe(ProbePhase::Post, post);
      for (std::uint64_t k = 0; k < config_.distractor_count; ++k) {
        ev.push_back({t, event::Distractor{k}});
        t += 1.0;
      }
      probe(ProbePhase::Final, final);
    }

    const double start = t + 1.0;
    ev.push_back({start, event::TaskStart{}});
    switch (plan.task) {
      case TaskType::Web:
        web_task(rng, plan.persona, shifted(persona.web, out.applied_effect), h.claim_id, start, ev);
        break;
      case TaskType::Coding:
        coding_task(rng, shifted(persona.coding, out.applied_effect), start, ev);
        break;
      case TaskType::Opinion:
        ev.push_back({r3(start + rng.lognormal_with_mean(persona.web.duration_mean_s / 4.0, 0.3)),
                      event::TaskEnd{TaskStatus::Completed}});
        break;
    }
    return out;
  }

 private:
  void web_task(Rng& rng, std::size_t persona_index, const WebParams& p, const std::string& claim_id, double start,
                std::vector<TraceEvent>& ev) const {
    const auto& pool = config_.domain_pool;
    const std::size_t n_pool = pool.size();

    std::size_t n_domains = 1 + static_cast<std::size_t>(rng.poisson(p.domains_mean - 1.0));
    n_domains = std::min(n_domains, n_pool);
    std::vector<double> weights(n_pool);
    for (std::size_t k = 0; k < n_pool; ++k) {
      weights[k] = 1.0 / static_cast<double>(1 + (k + 5 * persona_index) % n_pool);
    }
    std::vector<std::size_t> domains;
    for (std::size_t d = 0; d < n_domains; ++d) {
      double total = 0.0;
      for (double w : weights) total += w;
      double u = rng.uniform() * total;
      std::size_t pick = n_pool;
      for (std::size_t k = 0; k < n_pool; ++k) {
        if (weights[k] == 0.0) continue;
        pick = k;  // last nonzero candidate absorbs rounding at the top end
        if (u < weights[k]) break;
        u -= weights[k];
      }
      weights[pick] = 0.0;
      domains.push_back(pick);
    }

    const std::size_t extra = static_cast<std::size_t>(rng.poisson(p.unique_urls_mean - p.domains_mean));
    std::vector<std::string> urls;
    std::vector<std::size_t> per_domain(n_pool, 0);
    const auto make_url = [&](std::size_t domain) {
      return fmt::format("https://www.{}/page/{}", pool[domain], per_domain[domain]++);
    };
    for (std::size_t d : domains) urls.push_back(make_url(d));
    for (std::size_t i = 0; i < extra; ++i) urls.push_back(make_url(domains[rng.index(domains.size())]));
    std::vector<std::string> visits = urls;
    const std::size_t revisits = static_cast<std::size_t>(rng.poisson(p.revisits_mean));
    for (std::size_t i = 0; i < revisits; ++i) visits.push_back(urls[rng.index(urls.size())]);

    const std::size_t searches = static_cast<std::size_t>(rng.poisson(p.searches_mean));
    const std::size_t summaries = static_cast<std::size_t>(rng.poisson(p.summaries_mean));
    const std::size_t tool_calls = static_cast<std::size_t>(rng.poisson(p.tool_calls_mean));
    const double duration = rng.lognormal_with_mean(p.duration_mean_s, p.duration_sigma);

    enum Slot : char { kSearch, kVisit, kSummary, kTool };
    std::vector<char> slots;
    slots.insert(slots.end(), searches, kSearch);
    slots.insert(slots.end(), visits.size(), kVisit);
    slots.insert(slots.end(), summaries, kSummary);
    slots.insert(slots.end(), tool_calls, kTool);
    for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[rng.index(i)]);
    // open with a search when there is one
    if (searches > 0 && slots.front() != kSearch) {
      const auto it = std::find(slots.begin(), slots.end(), kSearch);
      std::rotate(slots.begin(), it, it + 1);
    }

    std::vector<double> times(slots.size());
    for (double& x : times) x = rng.uniform() * duration;
    std::sort(times.begin(), times.end());

    std::size_t next_visit = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const double at = r3(start + times[i]);
      switch (slots[i]) {
        case kSearch: {
          const auto a = kQueryTerms[rng.index(std::size(kQueryTerms))];
          const auto b = kQueryTerms[rng.index(std::size(kQueryTerms))];
          ev.push_back({at, event::Search{fmt::format("{} {} {}", claim_id, a, b)}});
          break;
        }
        case kVisit: {
          const std::string& url = visits[next_visit++];
          ev.push_back({at, event::Visit{url, registrable_domain(url)}});
          break;
        }
        case kSummary: ev.push_back({at, event::Summarize{}}); break;
        default: ev.push_back({at, event::ToolCall{config_.tools[rng.index(config_.tools.size())]}}); break;
      }
    }
    ev.push_back({r3(start + duration), event::TaskEnd{TaskStatus::Completed}});
  }

  void coding_task(Rng& rng, const CodingParams& p, double start, std::vector<TraceEvent>& ev) const {
    const std::size_t revisions = 1 + static_cast<std::size_t>(rng.poisson(p.revisions_mean - 1.0));
    double t = start;
    for (std::size_t r = 0; r < revisions; ++r) {
      t = r3(t + rng.lognormal_with_mean(p.think_gap_mean_s, p.latency_sigma));
      ev.push_back({t, event::CodeRevision{rng.geometric_with_mean(p.revision_size_mean)}});
      t = r3(t + rng.lognormal_with_mean(p.exec_latency_mean_s, p.latency_sigma));
      const bool passed = r + 1 == revisions || rng.bernoulli(0.3);
      ev.push_back({t, event::CodeExec{passed}});
    }
    t = r3(t + rng.lognormal_with_mean(p.think_gap_mean_s, p.latency_sigma));
    ev.push_back({t, event::TaskEnd{TaskStatus::Completed}});
  }

  const SimConfig& config_;
};

std::vector<TrialPlan> plan_trials(const SimConfig& config) {
  std::vector<TrialPlan> plans;
  for (const auto& backbone : config.backbones) {
    for (TaskType task : config.task_types) {
      for (const auto& [condition, count] : config.trials) {
        for (std::size_t p = 0; p < config.personas.size(); ++p) {
          for (std::size_t r = 0; r < count; ++r) {
            plans.push_back(TrialPlan{plans.size(), backbone, p, task, condition, r});
          }
        }
      }
    }
  }
  return plans;
}

// ---- JSON ----

void read_effect(const nlohmann::json& j, std::map<std::string, double>& out) {
  out.clear();
  for (const auto& [key, value] : j.items()) out[key] = value.get<double>();
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void read_web(const nlohmann::json& j, WebParams& w) {
  static const std::set<std::string> known = {"searches_mean", "domains_mean",   "unique_urls_mean",
                                              "revisits_mean", "summaries_mean", "tool_calls_mean",
                                              "duration_mean_s", "duration_sigma"};
  for (const auto& [key, v] : j.items()) {
    if (!known.contains(key)) out_of_range("unknown web parameter '" + key + "'");
  }
  read_field(j, "searches_mean", w.searches_mean);
  read_field(j, "domains_mean", w.domains_mean);
  read_field(j, "unique_urls_mean", w.unique_urls_mean);
  read_field(j, "revisits_mean", w.revisits_mean);
  read_field(j, "summaries_mean", w.summaries_mean);
  read_field(j, "tool_calls_mean", w.tool_calls_mean);
  read_field(j, "duration_mean_s", w.duration_mean_s);
  read_field(j, "duration_sigma", w.duration_sigma);
}

void read_coding(const nlohmann::json& j, CodingParams& c) {
  static const std::set<std::string> known = {"revisions_mean", "revision_size_mean", "think_gap_mean_s",
                                              "exec_latency_mean_s", "latency_sigma"};
  for (const auto& [key, v] : j.items()) {
    if (!known.contains(key)) out_of_range("unknown coding parameter '" + key + "'");
  }
  read_field(j, "revisions_mean", c.revisions_mean);
  read_field(j, "revision_size_mean", c.revision_size_mean);
  read_field(j, "think_gap_mean_s", c.think_gap_mean_s);
  read_field(j, "exec_latency_mean_s", c.exec_latency_mean_s);
  read_field(j, "latency_sigma", c.latency_sigma);
}

Tactic tactic_or_throw(const std::string& s) {
  const auto t = parse_tactic(s);
  if (!t) out_of_range("unknown tactic '" + s + "'");
  return *t;
}

ojson config_to_json(const SimConfig& c) {
  ojson j;
  j["master_seed"] = c.master_seed;
  j["backbones"] = c.backbones;
  j["task_types"] = ojson::array();
  for (TaskType t : c.task_types) j["task_types"].push_back(to_string(t));
  j["trials"] = ojson::object();
  for (const auto& [cond, n] : c.trials) j["trials"][std::string(to_string(cond))] = n;
  j["tactics"] = ojson::array();
  for (Tactic t : c.tactics) j["tactics"].push_back(to_string(t));
  j["susceptibility"] = ojson::object();
  for (const auto& [t, s] : c.susceptibility) j["susceptibility"][std::string(to_string(t))] = s;
  j["persona_susceptibility"] = ojson::object();
  for (const auto& [persona, m] : c.persona_susceptibility) {
    ojson pj = ojson::object();
    for (const auto& [t, s] : m) pj[std::string(to_string(t))] = s;
    j["persona_susceptibility"][persona] = pj;
  }
  j["fade_probability"] = c.fade_probability;
  j["distractor_count"] = c.distractor_count;
  j["belief_effect"] = ojson::object();
  for (const auto& [k, v] : c.belief_effect) j["belief_effect"][k] = v;
  j["disbelief_effect"] = ojson::object();
  for (const auto& [k, v] : c.disbelief_effect) j["disbelief_effect"][k] = v;
  j["claim_ids"] = c.claim_ids;
  j["domain_pool"] = c.domain_pool;
  j["tools"] = c.tools;
  j["personas"] = ojson::array();
  for (const auto& p : c.personas) {
    ojson pj;
    pj["name"] = p.name;
    pj["web"] = {{"searches_mean", p.web.searches_mean},     {"domains_mean", p.web.domains_mean},
                 {"unique_urls_mean", p.web.unique_urls_mean}, {"revisits_mean", p.web.revisits_mean},
                 {"summaries_mean", p.web.summaries_mean},   {"tool_calls_mean", p.web.tool_calls_mean},
                 {"duration_mean_s", p.web.duration_mean_s}, {"duration_sigma", p.web.duration_sigma}};
    pj["coding"] = {{"revisions_mean", p.coding.revisions_mean},
                    {"revision_size_mean", p.coding.revision_size_mean},
                    {"think_gap_mean_s", p.coding.think_gap_mean_s},
                    {"exec_latency_mean_s", p.coding.exec_latency_mean_s},
                    {"latency_sigma", p.coding.latency_sigma}};
    j["personas"].push_back(std::move(pj));
  }
  return j;
}

SimConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) out_of_range("config is not a JSON object");
  static const std::set<std::string> known = {
      "master_seed", "backbones",      "task_types",       "trials",        "tactics",     "susceptibility",
      "persona_susceptibility",        "fade_probability", "distractor_count", "belief_effect",
      "disbelief_effect", "claim_ids", "domain_pool",      "tools",         "personas"};
  for (const auto& [key, v] : j.items()) {
    if (!known.contains(key)) out_of_range("unknown config key '" + key + "'");
  }
  SimConfig c = SimConfig::defaults();
  try {
    read_field(j, "master_seed", c.master_seed);
    read_field(j, "backbones", c.backbones);
    if (j.contains("task_types")) {
      c.task_types.clear();
      for (const auto& s : j.at("task_types")) {
        const auto t = parse_task_type(s.get<std::string>());
        if (!t) out_of_range("unknown task type '" + s.get<std::string>() + "'");
        c.task_types.push_back(*t);
      }
    }
    if (j.contains("trials")) {
      c.trials.clear();
      for (const auto& [key, v] : j.at("trials").items()) {
        const auto cond = parse_condition(key);
        if (!cond) throw Error(ErrorCode::InvalidCondition, "unknown condition '" + key + "'");
        c.trials[*cond] = v.get<std::size_t>();
      }
    }
    if (j.contains("tactics")) {
      c.tactics.clear();
      for (const auto& s : j.at("tactics")) c.tactics.push_back(tactic_or_throw(s.get<std::string>()));
    }
    if (j.contains("susceptibility")) {
      for (const auto& [key, v] : j.at("susceptibility").items()) c.susceptibility[tactic_or_throw(key)] = v.get<double>();
    }
    if (j.contains("persona_susceptibility")) {
      c.persona_susceptibility.clear();
      for (const auto& [persona, m] : j.at("persona_susceptibility").items()) {
        for (const auto& [key, v] : m.items()) c.persona_susceptibility[persona][tactic_or_throw(key)] = v.get<double>();
      }
    }
    read_field(j, "fade_probability", c.fade_probability);
    read_field(j, "distractor_count", c.distractor_count);
    if (j.contains("belief_effect")) read_effect(j.at("belief_effect"), c.belief_effect);
    if (j.contains("disbelief_effect")) read_effect(j.at("disbelief_effect"), c.disbelief_effect);
    read_field(j, "claim_ids", c.claim_ids);
    read_field(j, "domain_pool", c.domain_pool);
    read_field(j, "tools", c.tools);
    if (j.contains("personas")) {
      c.personas.clear();
      for (const auto& pj : j.at("personas")) {
        PersonaParams p;
        p.name = pj.at("name").get<std::string>();
        if (pj.contains("web")) read_web(pj.at("web"), p.web);
        if (pj.contains("coding")) read_coding(pj.at("coding"), p.coding);
        c.personas.push_back(std::move(p));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    out_of_range(std::string("config: ") + e.what());
  }
  c.check();
  return c;
}

}  // namespace

SimConfig SimConfig::defaults() {
  SimConfig c;
  const std::pair<const char*, double> personas[] = {{"GPT", 0.92},     {"Claude", 1.0}, {"LLaMA", 1.08},
                                                     {"Mistral", 0.96}, {"Qwen", 1.04},  {"Gemini", 1.12}};
  for (const auto& [name, f] : personas) {
    PersonaParams p;
    p.name = name;
    p.web.duration_mean_s *= f;
    p.web.summaries_mean *= f;
    p.web.tool_calls_mean *= f;
    p.coding.think_gap_mean_s *= f;
    p.coding.revision_size_mean *= f;
    c.personas.push_back(std::move(p));
  }
  c.trials = {{Condition::C1, 50}, {Condition::C2, 50}, {Condition::C0P, 50}, {Condition::B, 50}, {Condition::NB, 50}};
  c.tactics = {std::begin(kAllTactics), std::end(kAllTactics)};
  c.susceptibility = {{Tactic::Baseline, 0.45},       {Tactic::LogicalAppeal, 0.40},  {Tactic::AuthorityEndorsement, 0.60},
                      {Tactic::EvidenceBased, 0.58}, {Tactic::PrimingUrgency, 0.38}, {Tactic::Anchoring, 0.45}};
  c.claim_ids = {"claim-01", "claim-02", "claim-03", "claim-04", "claim-05"};
  c.domain_pool = {"wikipedia.org", "nih.gov",       "who.int",       "nature.com",  "bbc.co.uk",
                   "reuters.com",   "nytimes.com",   "sciencedirect.com", "pubmed.gov", "cdc.gov",
                   "britannica.com", "theguardian.com", "pubmed.ncbi.nlm.nih.gov", "statista.com",
                   "reddit.com",    "medium.com",    "forbes.com",    "harvard.edu", "stanford.edu", "un.org"};
  c.tools = {"web_search", "page_reader", "summarizer", "scroll"};
  return c;
}

double SimConfig::susceptibility_of(const std::string& persona, Tactic tactic) const {
  if (const auto p = persona_susceptibility.find(persona); p != persona_susceptibility.end()) {
    if (const auto t = p->second.find(tactic); t != p->second.end()) return t->second;
  }
  const auto it = susceptibility.find(tactic);
  return it == susceptibility.end() ? 0.0 : it->second;
}

void SimConfig::check() const {
  const auto prob = [](double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) out_of_range(what + " must lie in [0, 1]");
  };
  prob(fade_probability, "fade_probability");
  for (const auto& [t, s] : susceptibility) prob(s, "susceptibility." + std::string(to_string(t)));
  for (const auto& [persona, m] : persona_susceptibility) {
    for (const auto& [t, s] : m) prob(s, "persona_susceptibility." + persona + "." + std::string(to_string(t)));
  }
  if (trials.empty()) out_of_range("no conditions to generate");
  for (const auto& [cond, n] : trials) {
    if (n < 1) out_of_range("trial count for " + std::string(to_string(cond)) + " must be at least 1");
  }
  if (backbones.empty()) out_of_range("no backbones");
  if (task_types.empty()) out_of_range("no task types");
  if (personas.empty()) out_of_range("no personas");
  if (claim_ids.empty()) out_of_range("no claim ids");
  if (domain_pool.empty()) out_of_range("empty domain pool");
  if (tools.empty()) out_of_range("empty tool list");
  if (trials.contains(Condition::C2) && tactics.empty()) out_of_range("C2 requested without tactics");
  std::set<std::string> names;
  for (const auto& p : personas) {
    if (p.name.empty() || !names.insert(p.name).second) out_of_range("persona names must be unique and nonempty");
  }
  for (const auto* e : {&belief_effect, &disbelief_effect}) {
    for (const auto& [key, v] : *e) {
      if (std::find(std::begin(kEffectKeys), std::end(kEffectKeys), key) == std::end(kEffectKeys)) {
        out_of_range("unknown effect key '" + key + "'");
      }
      if (!std::isfinite(v)) out_of_range("effect '" + key + "' is not finite");
    }
  }
  for (const auto& p : personas) {
    check_params(p.web, p.coding, "persona " + p.name);
    check_params(shifted(p.web, belief_effect), shifted(p.coding, belief_effect), "persona " + p.name + " + belief");
    check_params(shifted(p.web, disbelief_effect), shifted(p.coding, disbelief_effect),
                 "persona " + p.name + " + disbelief");
  }
}

SimConfig parse_sim_config(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded()) out_of_range("config is not valid JSON");
  return config_from_json(j);
}

SimConfig read_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sim_config(buf.str());
}

std::string sim_config_json(const SimConfig& config) { return config_to_json(config).dump(2) + "\n"; }

std::vector<SimOutcome> run_pipeline(const SimConfig& config, unsigned workers) {
  config.check();
  const auto plans = plan_trials(config);
  std::vector<SimOutcome> out(plans.size());
  const TrialGenerator gen(config);
  workers = std::max(1u, workers);
  if (workers == 1 || plans.size() < 2) {
    for (const auto& plan : plans) out[plan.index] = gen.generate(plan);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < plans.size(); i += workers) out[i] = gen.generate(plans[i]);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

std::string ground_truth_json(const SimConfig& config, std::span<const SimOutcome> outcomes) {
  ojson doc;
  doc["schema_version"] = kSchemaVersion;
  doc["config"] = config_to_json(config);
  doc["trials"] = ojson::array();
  for (const auto& o : outcomes) {
    ojson t;
    t["trial_id"] = o.trial.header.trial_id;
    t["persuaded"] = o.persuaded;
    t["applied_effect"] = ojson::object();
    for (const auto& [k, v] : o.applied_effect) t["applied_effect"][k] = v;
    doc["trials"].push_back(std::move(t));
  }
  return doc.dump(2) + "\n";
}

void emit_corpus(const SimConfig& config, std::span<const SimOutcome> outcomes, const std::filesystem::path& dir) {
  if (outcomes.empty()) throw Error(ErrorCode::EmptyInput, "no outcomes to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<TrialRecord> trials;
  trials.reserve(outcomes.size());
  for (const auto& o : outcomes) trials.push_back(o.trial);
  write_trace_file(dir / kTraceFileName, trials);
  const std::string truth = ground_truth_json(config, outcomes);
  std::ofstream out(dir / kGroundTruthFileName, std::ios::binary);
  if (!out || !(out << truth) || !out.flush()) {
    throw Error(ErrorCode::IoFailure, "cannot write " + (dir / kGroundTruthFileName).string());
  }
}

SimConfig config_from_ground_truth(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.contains("config")) out_of_range("ground truth document has no config");
  return config_from_json(j.at("config"));
}

}  // namespace driftlab
