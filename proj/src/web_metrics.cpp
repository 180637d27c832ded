#include "driftlab/web_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "driftlab/csv.hpp"
#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"

namespace driftlab {

WebRaw extract_web_raw(const TrialRecord& trial) {
  const std::string& id = trial.header.trial_id;
  if (trial.header.task_type != TaskType::Web) throw Error(ErrorCode::InvalidTrial, "trial '" + id + "' is not a web trial");

  WebRaw raw;
  std::optional<std::size_t> start_idx, end_idx;
  std::set<std::string> urls;
  for (std::size_t i = 0; i < trial.events.size(); ++i) {
    const TraceEvent& e = trial.events[i];
    switch (e.kind()) {
      case EventKind::TaskStart: start_idx = i; break;
      case EventKind::TaskEnd: end_idx = i; break;
      case EventKind::Search:
        ++raw.num_web_events;
        ++raw.num_searches;
        raw.queries.push_back(e.as<event::Search>()->query);
        break;
      case EventKind::Visit: {
        const auto& v = *e.as<event::Visit>();
        ++raw.num_web_events;
        ++raw.num_visits;
        urls.insert(v.url);
        ++raw.domain_histogram[v.domain];
        break;
      }
      case EventKind::Summarize:
        ++raw.num_web_events;
        ++raw.num_summaries;
        break;
      case EventKind::ToolCall:
        ++raw.num_web_events;
        ++raw.tool_counts[e.as<event::ToolCall>()->tool_name];
        break;
      default: break;
    }
  }
  if (!start_idx || !end_idx) throw Error(ErrorCode::MissingTaskBoundary, "trial '" + id + "'");

  raw.total_duration_s = trial.events[*end_idx].t - trial.events[*start_idx].t;
  raw.num_domains = raw.domain_histogram.size();
  raw.num_unique_urls = urls.size();
  std::vector<double> counts;
  counts.reserve(raw.domain_histogram.size());
  for (const auto& [domain, n] : raw.domain_histogram) counts.push_back(static_cast<double>(n));
  raw.domain_entropy = shannon_entropy_bits(counts);
  raw.unique_url_ratio =
      raw.num_visits == 0 ? 0.0 : static_cast<double>(raw.num_unique_urls) / static_cast<double>(raw.num_visits);

  if (*end_idx > *start_idx + 2) {
    const std::size_t first = *start_idx + 1, last = *end_idx - 1;
    raw.avg_latency_s = (trial.events[last].t - trial.events[first].t) / static_cast<double>(last - first);
  }
  raw.query_similarity = query_similarity(raw.queries);
  raw.zero_events = raw.num_web_events == 0;
  return raw;
}

ReferenceProfile build_reference_profile(const std::string& backbone, const std::string& persona,
                                         std::span<const WebRaw> baseline_trials,
                                         const std::vector<std::string>& tool_vocabulary) {
  ReferenceProfile ref;
  ref.backbone = backbone;
  ref.persona = persona;
  ref.n_trials = baseline_trials.size();
  ref.tool_vocabulary = tool_vocabulary;
  ref.tool_mean.assign(tool_vocabulary.size(), 0.0);
  for (const WebRaw& raw : baseline_trials) {
    for (const auto& [domain, n] : raw.domain_histogram) {
      ref.domain_counts[domain] += static_cast<double>(n);
      ref.baseline_domains.insert(domain);
    }
    const auto counts = tool_count_vector(raw, tool_vocabulary);
    for (std::size_t k = 0; k < counts.size(); ++k) ref.tool_mean[k] += counts[k];
  }
  if (!baseline_trials.empty()) {
    for (double& m : ref.tool_mean) m /= static_cast<double>(baseline_trials.size());
  }
  return ref;
}

double domain_kl(const std::map<std::string, std::size_t>& trial_hist, const ReferenceProfile& ref, double alpha) {
  if (ref.domain_counts.empty()) {
    throw Error(ErrorCode::EmptyReference, "reference for persona '" + ref.persona + "' has no domains");
  }
  std::set<std::string> support;
  double trial_total = 0.0, ref_total = 0.0;
  for (const auto& [d, n] : trial_hist) {
    support.insert(d);
    trial_total += static_cast<double>(n);
  }
  for (const auto& [d, n] : ref.domain_counts) {
    support.insert(d);
    ref_total += n;
  }
  const double k = static_cast<double>(support.size());
  const double p_denom = trial_total + alpha * k;
  const double q_denom = ref_total + alpha * k;
  double kl = 0.0;
  for (const std::string& d : support) {
    const auto ti = trial_hist.find(d);
    const auto ri = ref.domain_counts.find(d);
    const double p = ((ti == trial_hist.end() ? 0.0 : static_cast<double>(ti->second)) + alpha) / p_denom;
    const double q = ((ri == ref.domain_counts.end() ? 0.0 : ri->second) + alpha) / q_denom;
    kl += p * std::log2(p / q);
  }
  return std::max(kl, 0.0);
}

double domain_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) throw Error(ErrorCode::BothEmpty, "jaccard of two empty domain sets");
  std::size_t inter = 0;
  for (const auto& d : a) inter += b.contains(d) ? 1 : 0;
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double tool_drift(std::span<const double> trial_counts, std::span<const double> ref_mean) {
  if (trial_counts.size() != ref_mean.size()) {
    throw Error(ErrorCode::VocabularyMismatch, "tool vectors of length " + std::to_string(trial_counts.size()) +
                                                   " and " + std::to_string(ref_mean.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < trial_counts.size(); ++i) sum += std::abs(trial_counts[i] - ref_mean[i]);
  return sum;
}

std::vector<double> tool_count_vector(const WebRaw& raw, const std::vector<std::string>& vocabulary) {
  std::vector<double> counts(vocabulary.size(), 0.0);
  for (const auto& [name, n] : raw.tool_counts) {
    const auto it = std::find(vocabulary.begin(), vocabulary.end(), name);
    if (it == vocabulary.end()) throw Error(ErrorCode::VocabularyMismatch, "tool '" + name + "' not in vocabulary");
    counts[static_cast<std::size_t>(it - vocabulary.begin())] = static_cast<double>(n);
  }
  return counts;
}

namespace {

std::map<std::string, double> term_frequencies(std::string_view query) {
  std::map<std::string, double> tf;
  std::string token;
  const auto flush = [&] {
    if (!token.empty()) tf[token] += 1.0;
    token.clear();
  };
  for (char c : query) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return tf;
}

double tf_cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [t, x] : a) {
    na += x * x;
    if (const auto it = b.find(t); it != b.end()) dot += x * it->second;
  }
  for (const auto& [t, y] : b) nb += y * y;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::optional<double> query_similarity(std::span<const std::string> queries,
                                       std::optional<std::span<const std::vector<double>>> vectors) {
  if (vectors && vectors->size() != queries.size()) {
    throw Error(ErrorCode::VectorCountMismatch, std::to_string(vectors->size()) + " vectors for " +
                                                    std::to_string(queries.size()) + " queries");
  }
  if (queries.size() < 2) return std::nullopt;
  double sum = 0.0;
  if (vectors) {
    for (std::size_t i = 1; i < queries.size(); ++i) sum += cosine_similarity((*vectors)[i - 1], (*vectors)[i]);
  } else {
    auto previous = term_frequencies(queries[0]);
    for (std::size_t i = 1; i < queries.size(); ++i) {
      auto current = term_frequencies(queries[i]);
      sum += tf_cosine(previous, current);
      previous = std::move(current);
    }
  }
  return sum / static_cast<double>(queries.size() - 1);
}

std::string_view to_string(WebMetric m) noexcept {
  switch (m) {
    case WebMetric::NumWebEvents: return "num_web_events";
    case WebMetric::TotalDurationS: return "total_duration_s";
    case WebMetric::ToolDrift: return "tool_drift";
    case WebMetric::NumDomains: return "num_domains";
    case WebMetric::NumSearches: return "num_searches";
    case WebMetric::DomainEntropy: return "domain_entropy";
    case WebMetric::UniqueUrlRatio: return "unique_url_ratio";
    case WebMetric::DomainKl: return "domain_kl";
    case WebMetric::DomainJaccard: return "domain_jaccard";
    case WebMetric::NumUniqueUrls: return "num_unique_urls";
    case WebMetric::NumSummaries: return "num_summaries";
    case WebMetric::AvgLatencyS: return "avg_latency_s";
    case WebMetric::QuerySimilarity: return "query_similarity";
  }
  return "num_web_events";
}

std::optional<WebMetric> parse_web_metric(std::string_view s) noexcept {
  for (WebMetric m : kWebMetrics) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

std::optional<double> metric_value(const WebMetrics& m, WebMetric metric) noexcept {
  const WebRaw& r = m.raw;
  switch (metric) {
    case WebMetric::NumWebEvents: return static_cast<double>(r.num_web_events);
    case WebMetric::TotalDurationS: return r.total_duration_s;
    case WebMetric::ToolDrift: return m.tool_drift;
    case WebMetric::NumDomains: return static_cast<double>(r.num_domains);
    case WebMetric::NumSearches: return static_cast<double>(r.num_searches);
    case WebMetric::DomainEntropy: return r.domain_entropy;
    case WebMetric::UniqueUrlRatio: return r.unique_url_ratio;
    case WebMetric::DomainKl: return m.domain_kl;
    case WebMetric::DomainJaccard: return m.domain_jaccard;
    case WebMetric::NumUniqueUrls: return static_cast<double>(r.num_unique_urls);
    case WebMetric::NumSummaries: return static_cast<double>(r.num_summaries);
    case WebMetric::AvgLatencyS: return r.avg_latency_s;
    case WebMetric::QuerySimilarity: return r.query_similarity;
  }
  return std::nullopt;
}

WebStratumResult score_web_stratum(const std::string& backbone, std::span<const WebTrialInput> trials,
                                   const std::vector<std::string>& tool_vocabulary) {
  WebStratumResult result;

  // Phase 1: references from baseline trials only.
  std::map<std::string, std::vector<WebRaw>> baseline_raw;
  std::vector<std::size_t> slot(trials.size(), 0);  // position among the persona's baseline trials
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    if (!t.is_baseline) continue;
    slot[i] = baseline_raw[t.persona].size();
    baseline_raw[t.persona].push_back(t.raw);
  }
  std::map<std::string, ReferenceProfile> profiles;
  for (const auto& [persona, raws] : baseline_raw) {
    profiles.emplace(persona, build_reference_profile(backbone, persona, raws, tool_vocabulary));
  }

  // Phase 2: reference-relative metrics for every trial.
  result.rows.reserve(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    WebScores row;
    row.trial_id = t.trial_id;
    row.persona = t.persona;
    row.is_baseline = t.is_baseline;
    row.metrics.raw = t.raw;
    const auto it = profiles.find(t.persona);
    if (it == profiles.end()) {
      result.missing_reference.push_back(t.trial_id);
    } else {
      // A baseline trial is held out of its own reference; otherwise it sits closer to the
      // reference than any other trial can and every baseline-relative delta is biased.
      ReferenceProfile held_out;
      if (t.is_baseline) {
        std::vector<WebRaw> others = baseline_raw.at(t.persona);
        others.erase(others.begin() + static_cast<std::ptrdiff_t>(slot[i]));
        held_out = build_reference_profile(backbone, t.persona, others, tool_vocabulary);
      }
      const ReferenceProfile& ref = t.is_baseline ? held_out : it->second;
      if (ref.n_trials > 0) {
        if (!ref.domain_counts.empty()) row.metrics.domain_kl = domain_kl(t.raw.domain_histogram, ref);
        std::set<std::string> domains;
        for (const auto& [d, n] : t.raw.domain_histogram) domains.insert(d);
        if (!domains.empty() || !ref.baseline_domains.empty()) {
          row.metrics.domain_jaccard = domain_jaccard(domains, ref.baseline_domains);
        }
        row.metrics.tool_drift = tool_drift(tool_count_vector(t.raw, tool_vocabulary), ref.tool_mean);
      }
    }
    result.rows.push_back(std::move(row));
  }

  // Phase 3: persona baseline means and deltas.
  BaselineTable baselines;
  for (const auto& row : result.rows) {
    if (!row.is_baseline) continue;
    for (WebMetric m : kWebMetrics) {
      if (const auto v = metric_value(row.metrics, m)) baselines.add(row.persona, std::string(to_string(m)), *v);
    }
  }
  for (auto& row : result.rows) {
    for (std::size_t k = 0; k < kWebMetrics.size(); ++k) {
      const std::string name(to_string(kWebMetrics[k]));
      const auto v = metric_value(row.metrics, kWebMetrics[k]);
      if (v && baselines.contains(row.persona, name)) row.deltas[k] = persona_delta(*v, baselines.at(row.persona, name));
    }
  }
  result.baselines = baselines.entries();
  for (auto& [persona, ref] : profiles) result.profiles.push_back(std::move(ref));
  return result;
}

std::string web_scores_csv(std::span<const WebScores> rows) {
  std::ostringstream out;
  out << "trial_id,num_web_events,total_duration_s,num_searches,num_visits,num_domains,num_unique_urls,"
         "num_summaries,domain_entropy,unique_url_ratio,avg_latency_s,query_similarity,domain_kl,domain_jaccard,"
         "tool_drift";
  for (WebMetric m : kWebMetrics) out << ",d_" << to_string(m);
  out << '\n';
  for (const auto& row : rows) {
    const WebRaw& r = row.metrics.raw;
    out << csv::escape(row.trial_id) << ',' << r.num_web_events << ',' << csv::number(r.total_duration_s) << ','
        << r.num_searches << ',' << r.num_visits << ',' << r.num_domains << ',' << r.num_unique_urls << ','
        << r.num_summaries << ',' << csv::number(r.domain_entropy) << ',' << csv::number(r.unique_url_ratio) << ','
        << csv::number(r.avg_latency_s) << ',' << csv::number(r.query_similarity) << ','
        << csv::number(row.metrics.domain_kl) << ',' << csv::number(row.metrics.domain_jaccard) << ','
        << csv::number(row.metrics.tool_drift);
    for (const auto& d : row.deltas) out << ',' << csv::number(d);
    out << '\n';
  }
  return out.str();
}

std::string reference_profiles_json(std::span<const ReferenceProfile> profiles) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["profiles"] = nlohmann::ordered_json::array();
  for (const auto& p : profiles) {
    nlohmann::ordered_json j;
    j["backbone"] = p.backbone;
    j["persona"] = p.persona;
    j["n_trials"] = p.n_trials;
    j["domain_counts"] = p.domain_counts;
    j["tool_vocabulary"] = p.tool_vocabulary;
    j["tool_mean"] = p.tool_mean;
    j["baseline_domains"] = p.baseline_domains;
    doc["profiles"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::vector<ReferenceProfile> parse_reference_profiles_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::MalformedLine, "reference profile document is not JSON");
  std::vector<ReferenceProfile> out;
  try {
    for (const auto& j : doc.at("profiles")) {
      ReferenceProfile p;
      p.backbone = j.at("backbone").get<std::string>();
      p.persona = j.at("persona").get<std::string>();
      p.n_trials = j.at("n_trials").get<std::size_t>();
      p.domain_counts = j.at("domain_counts").get<std::map<std::string, double>>();
      p.tool_vocabulary = j.at("tool_vocabulary").get<std::vector<std::string>>();
      p.tool_mean = j.at("tool_mean").get<std::vector<double>>();
      p.baseline_domains = j.at("baseline_domains").get<std::set<std::string>>();
      if (p.tool_mean.size() != p.tool_vocabulary.size()) {
        throw Error(ErrorCode::VocabularyMismatch, "profile '" + p.persona + "'");
      }
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedLine, std::string("reference profile: ") + e.what());
  }
  return out;
}

}  // namespace driftlab
