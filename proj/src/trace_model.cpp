#include "driftlab/trace_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "driftlab/error.hpp"
#include "driftlab/numeric.hpp"

namespace driftlab {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string normalize_label(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == ' ' || c == '-') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Tactic v) noexcept {
  switch (v) {
    case Tactic::Baseline: return "baseline";
    case Tactic::LogicalAppeal: return "logical_appeal";
    case Tactic::AuthorityEndorsement: return "authority_endorsement";
    case Tactic::EvidenceBased: return "evidence_based";
    case Tactic::PrimingUrgency: return "priming_urgency";
    case Tactic::Anchoring: return "anchoring";
  }
  return "baseline";
}

std::string_view display_name(Tactic v) noexcept {
  switch (v) {
    case Tactic::Baseline: return "Baseline (none)";
    case Tactic::LogicalAppeal: return "Logical Appeal";
    case Tactic::AuthorityEndorsement: return "Authority Endorsement";
    case Tactic::EvidenceBased: return "Evidence-based";
    case Tactic::PrimingUrgency: return "Priming Urgency";
    case Tactic::Anchoring: return "Anchoring";
  }
  return "Baseline (none)";
}

std::string_view to_string(Condition v) noexcept {
  switch (v) {
    case Condition::C0: return "C0";
    case Condition::C1: return "C1";
    case Condition::C2: return "C2";
    case Condition::C0P: return "C0P";
    case Condition::B: return "B";
    case Condition::NB: return "NB";
  }
  return "C0";
}

std::string_view to_string(TaskType v) noexcept {
  switch (v) {
    case TaskType::Opinion: return "opinion";
    case TaskType::Coding: return "coding";
    case TaskType::Web: return "web";
  }
  return "opinion";
}

std::string_view to_string(Stance v) noexcept {
  switch (v) {
    case Stance::A: return "A";
    case Stance::B: return "B";
    case Stance::Unparsed: return "unparsed";
  }
  return "unparsed";
}

std::string_view to_string(ProbePhase v) noexcept {
  switch (v) {
    case ProbePhase::Initial: return "initial";
    case ProbePhase::Post: return "post";
    case ProbePhase::Final: return "final";
  }
  return "initial";
}

std::string_view to_string(InjectionKind v) noexcept {
  return v == InjectionKind::Neutral ? "neutral" : "persuasive";
}

std::string_view to_string(TaskStatus v) noexcept {
  switch (v) {
    case TaskStatus::Completed: return "completed";
    case TaskStatus::Terminated: return "terminated";
    case TaskStatus::Aborted: return "aborted";
  }
  return "completed";
}

std::string_view to_string(EventKind v) noexcept {
  switch (v) {
    case EventKind::StanceProbe: return "stance_probe";
    case EventKind::Injection: return "injection";
    case EventKind::Commitment: return "commitment";
    case EventKind::Distractor: return "distractor";
    case EventKind::TaskStart: return "task_start";
    case EventKind::Search: return "search";
    case EventKind::Visit: return "visit";
    case EventKind::Summarize: return "summarize";
    case EventKind::ToolCall: return "tool_call";
    case EventKind::CodeExec: return "code_exec";
    case EventKind::CodeRevision: return "code_revision";
    case EventKind::TaskEnd: return "task_end";
  }
  return "task_end";
}

std::optional<Tactic> parse_tactic(std::string_view s) noexcept {
  const std::string n = normalize_label(s);
  for (Tactic t : kAllTactics) {
    if (n == to_string(t)) return t;
  }
  if (n == "none" || n == "baseline_(none)") return Tactic::Baseline;
  if (n == "urgency_priming") return Tactic::PrimingUrgency;
  return std::nullopt;
}

std::optional<Condition> parse_condition(std::string_view s) noexcept {
  std::string n;
  for (char c : s) n.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (n == "C0'") return Condition::C0P;
  for (Condition c : kAllConditions) {
    if (n == to_string(c)) return c;
  }
  return std::nullopt;
}

std::optional<TaskType> parse_task_type(std::string_view s) noexcept {
  const std::string n = normalize_label(s);
  if (n == "opinion") return TaskType::Opinion;
  if (n == "coding") return TaskType::Coding;
  if (n == "web") return TaskType::Web;
  return std::nullopt;
}

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept {
  for (int i = 0; i <= static_cast<int>(EventKind::TaskEnd); ++i) {
    const auto k = static_cast<EventKind>(i);
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

Stance parse_stance(std::string_view raw_text) noexcept {
  std::size_t i = 0;
  while (i < raw_text.size() && std::isspace(static_cast<unsigned char>(raw_text[i]))) ++i;
  std::size_t j = i;
  while (j < raw_text.size() && !std::isspace(static_cast<unsigned char>(raw_text[j]))) ++j;
  const std::string_view token = raw_text.substr(i, j - i);
  for (const char label : {'A', 'B'}) {
    const char lower = static_cast<char>(label + ('a' - 'A'));
    const auto is_label = [&](char c) { return c == label || c == lower; };
    const bool match = (token.size() == 1 && is_label(token[0])) ||
                       (token.size() == 2 && is_label(token[0]) && token[1] == '.') ||
                       (token.size() == 3 && token[0] == '(' && is_label(token[1]) && token[2] == ')');
    if (match) return label == 'A' ? Stance::A : Stance::B;
  }
  return Stance::Unparsed;
}

std::string registrable_domain(std::string_view url) {
  std::string_view rest = url;
  if (const auto scheme = rest.find("://"); scheme != std::string_view::npos) {
    rest.remove_prefix(scheme + 3);
  } else if (rest.starts_with("//")) {
    rest.remove_prefix(2);
  }
  const auto end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, end);
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
  std::string_view host = authority;
  if (host.starts_with('[')) {
    if (const auto close = host.find(']'); close != std::string_view::npos) host = host.substr(0, close + 1);
  } else if (const auto colon = host.find(':'); colon != std::string_view::npos) {
    host = host.substr(0, colon);
  }
  std::string out;
  out.reserve(host.size());
  for (char c : host) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (out.starts_with("www.")) out.erase(0, 4);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct FieldError {
  std::string message;
};

const json& require(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw FieldError{std::string("missing field '") + key + "'"};
  return *it;
}

std::string get_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw FieldError{std::string("field '") + key + "' must be a string"};
  return v.get<std::string>();
}

std::uint64_t get_unsigned(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number_unsigned()) {
    throw FieldError{std::string("field '") + key + "' must be a non-negative integer"};
  }
  return v.get<std::uint64_t>();
}

template <typename Enum>
Enum get_enum(const json& j, const char* key, std::optional<Enum> (*parse)(std::string_view) noexcept) {
  const std::string s = get_string(j, key);
  const auto parsed = parse(s);
  if (!parsed) throw FieldError{std::string("unknown value '") + s + "' for field '" + key + "'"};
  return *parsed;
}

TrialHeader header_from_json(const json& j) {
  TrialHeader h;
  h.trial_id = get_string(j, "trial_id");
  h.backbone = get_string(j, "backbone");
  h.persona = get_string(j, "persona");
  h.tactic = get_enum<Tactic>(j, "tactic", parse_tactic);
  h.condition = get_enum<Condition>(j, "condition", parse_condition);
  h.task_type = get_enum<TaskType>(j, "task_type", parse_task_type);
  h.claim_id = get_string(j, "claim_id");
  h.distractor_count = get_unsigned(j, "distractor_count");
  h.seed = get_unsigned(j, "seed");
  const json& version = require(j, "schema_version");
  if (!version.is_number_integer()) throw FieldError{"field 'schema_version' must be an integer"};
  h.schema_version = version.get<int>();
  return h;
}

std::optional<ProbePhase> parse_phase(std::string_view s) noexcept {
  if (s == "initial") return ProbePhase::Initial;
  if (s == "post") return ProbePhase::Post;
  if (s == "final") return ProbePhase::Final;
  return std::nullopt;
}

std::optional<Stance> parse_stance_label(std::string_view s) noexcept {
  if (s == "A") return Stance::A;
  if (s == "B") return Stance::B;
  if (s == "unparsed") return Stance::Unparsed;
  return std::nullopt;
}

std::optional<InjectionKind> parse_injection_kind(std::string_view s) noexcept {
  if (s == "neutral") return InjectionKind::Neutral;
  if (s == "persuasive") return InjectionKind::Persuasive;
  return std::nullopt;
}

std::optional<TaskStatus> parse_status(std::string_view s) noexcept {
  if (s == "completed") return TaskStatus::Completed;
  if (s == "terminated") return TaskStatus::Terminated;
  if (s == "aborted") return TaskStatus::Aborted;
  return std::nullopt;
}

TraceEvent event_from_json(const json& j) {
  TraceEvent e;
  const json& t = require(j, "t");
  if (!t.is_number()) throw FieldError{"field 't' must be a number"};
  e.t = t.get<double>();
  const EventKind kind = get_enum<EventKind>(j, "kind", parse_event_kind);
  switch (kind) {
    case EventKind::StanceProbe: {
      event::StanceProbe p;
      p.phase = get_enum<ProbePhase>(j, "phase", parse_phase);
      p.raw_text = get_string(j, "raw_text");
      p.stance = j.contains("stance") ? get_enum<Stance>(j, "stance", parse_stance_label)
                                      : parse_stance(p.raw_text);
      e.payload = std::move(p);
      break;
    }
    case EventKind::Injection:
      e.payload = event::Injection{get_enum<InjectionKind>(j, "injection_kind", parse_injection_kind),
                                   get_string(j, "text")};
      break;
    case EventKind::Commitment: e.payload = event::Commitment{}; break;
    case EventKind::Distractor: e.payload = event::Distractor{get_unsigned(j, "index")}; break;
    case EventKind::TaskStart: e.payload = event::TaskStart{}; break;
    case EventKind::Search: e.payload = event::Search{get_string(j, "query")}; break;
    case EventKind::Visit: {
      event::Visit v;
      v.url = get_string(j, "url");
      v.domain = j.contains("domain") ? get_string(j, "domain") : registrable_domain(v.url);
      e.payload = std::move(v);
      break;
    }
    case EventKind::Summarize: e.payload = event::Summarize{}; break;
    case EventKind::ToolCall: e.payload = event::ToolCall{get_string(j, "tool_name")}; break;
    case EventKind::CodeExec: {
      const json& passed = require(j, "passed");
      if (!passed.is_boolean()) throw FieldError{"field 'passed' must be a boolean"};
      e.payload = event::CodeExec{passed.get<bool>()};
      break;
    }
    case EventKind::CodeRevision: e.payload = event::CodeRevision{get_unsigned(j, "lines_changed")}; break;
    case EventKind::TaskEnd: e.payload = event::TaskEnd{get_enum<TaskStatus>(j, "status", parse_status)}; break;
  }
  return e;
}

ordered_json header_to_json(const TrialHeader& h) {
  ordered_json j;
  j["record"] = "trial_header";
  j["trial_id"] = h.trial_id;
  j["backbone"] = h.backbone;
  j["persona"] = h.persona;
  j["tactic"] = to_string(h.tactic);
  j["condition"] = to_string(h.condition);
  j["task_type"] = to_string(h.task_type);
  j["claim_id"] = h.claim_id;
  j["distractor_count"] = h.distractor_count;
  j["seed"] = h.seed;
  j["schema_version"] = h.schema_version;
  return j;
}

ordered_json event_to_json(const std::string& trial_id, const TraceEvent& e) {
  ordered_json j;
  j["record"] = "event";
  j["trial_id"] = trial_id;
  j["t"] = e.t;
  j["kind"] = to_string(e.kind());
  std::visit(
      [&j](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, event::StanceProbe>) {
          j["phase"] = to_string(p.phase);
          j["stance"] = to_string(p.stance);
          j["raw_text"] = p.raw_text;
        } else if constexpr (std::is_same_v<T, event::Injection>) {
          j["injection_kind"] = to_string(p.injection_kind);
          j["text"] = p.text;
        } else if constexpr (std::is_same_v<T, event::Distractor>) {
          j["index"] = p.index;
        } else if constexpr (std::is_same_v<T, event::Search>) {
          j["query"] = p.query;
        } else if constexpr (std::is_same_v<T, event::Visit>) {
          j["url"] = p.url;
          j["domain"] = p.domain;
        } else if constexpr (std::is_same_v<T, event::ToolCall>) {
          j["tool_name"] = p.tool_name;
        } else if constexpr (std::is_same_v<T, event::CodeExec>) {
          j["passed"] = p.passed;
        } else if constexpr (std::is_same_v<T, event::CodeRevision>) {
          j["lines_changed"] = p.lines_changed;
        } else if constexpr (std::is_same_v<T, event::TaskEnd>) {
          j["status"] = to_string(p.status);
        }
      },
      e.payload);
  return j;
}

struct PendingTrial {
  TrialRecord record;
  bool aborted = false;
};

}  // namespace

std::vector<Violation> validate_trial(const TrialRecord& trial) {
  std::vector<Violation> out;
  const TrialHeader& h = trial.header;
  const auto add = [&](std::string rule, std::string message) {
    out.push_back(Violation{h.trial_id, std::nullopt, std::move(rule), std::move(message)});
  };

  if (h.trial_id.empty()) add("trial_id_nonempty", "trial_id is empty");
  if (h.schema_version != kSchemaVersion) {
    add("schema_version", "unsupported schema_version " + std::to_string(h.schema_version));
  }
  if (requires_baseline_tactic(h.condition) && h.tactic != Tactic::Baseline) {
    add("baseline_tactic", "condition " + std::string(to_string(h.condition)) +
                               " requires tactic baseline, found " + std::string(to_string(h.tactic)));
  }

  std::size_t probes = 0, starts = 0, ends = 0;
  std::optional<double> start_t, end_t;
  double previous_t = 0.0;
  for (std::size_t i = 0; i < trial.events.size(); ++i) {
    const TraceEvent& e = trial.events[i];
    const std::string where = "event " + std::to_string(i);
    if (!std::isfinite(e.t) || e.t < 0.0) {
      add("event_time", where + " has invalid t");
    } else {
      if (i > 0 && e.t < previous_t) add("event_order", where + " precedes the previous event in time");
      previous_t = e.t;
    }
    switch (e.kind()) {
      case EventKind::StanceProbe: ++probes; break;
      case EventKind::TaskStart:
        ++starts;
        start_t = e.t;
        break;
      case EventKind::TaskEnd:
        ++ends;
        end_t = e.t;
        break;
      case EventKind::Visit: {
        const auto& v = *e.as<event::Visit>();
        if (v.domain != registrable_domain(v.url)) {
          add("visit_domain", where + " domain '" + v.domain + "' does not match url host");
        }
        break;
      }
      case EventKind::CodeRevision:
        if (e.as<event::CodeRevision>()->lines_changed == 0) {
          add("lines_changed_positive", where + " has lines_changed = 0");
        }
        break;
      default: break;
    }
  }

  if (is_prefill(h.condition) && probes > 0) {
    add("prefill_no_probes", "prefill condition " + std::string(to_string(h.condition)) + " contains " +
                                 std::to_string(probes) + " stance probe(s)");
  }
  if (requires_probes(h.condition) && probes == 0) {
    add("probes_required", "condition " + std::string(to_string(h.condition)) + " has no stance probes");
  }
  if (starts > 1) add("single_task_start", "more than one task_start event");
  if (ends > 1) add("single_task_end", "more than one task_end event");
  if (start_t && end_t && *end_t < *start_t) add("task_end_after_start", "task_end precedes task_start");
  return out;
}

ParseResult parse_trace(std::istream& in) {
  ParseResult result;
  std::vector<PendingTrial> pending;
  std::unordered_map<std::string, std::size_t> index_of;
  std::unordered_set<std::string> poisoned;  // ids that must never load

  const auto abort_trial = [&](const std::string& id) {
    if (const auto it = index_of.find(id); it != index_of.end()) pending[it->second].aborted = true;
    poisoned.insert(id);
  };
  const auto report = [&](const std::string& id, std::size_t line_no, std::string rule, std::string msg) {
    result.violations.push_back(Violation{id, line_no, std::move(rule), std::move(msg)});
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;

    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      report("", line_no, "MalformedLine", "line is not a JSON object");
      continue;
    }
    std::string trial_id;
    if (const auto it = j.find("trial_id"); it != j.end() && it->is_string()) trial_id = it->get<std::string>();

    try {
      const std::string record = get_string(j, "record");
      if (record == "trial_header") {
        TrialHeader header = header_from_json(j);
        if (index_of.contains(header.trial_id)) {
          report(header.trial_id, line_no, "DuplicateTrialId", "trial_id declared twice");
          abort_trial(header.trial_id);
          continue;
        }
        const bool poisoned_before = poisoned.contains(header.trial_id);
        index_of.emplace(header.trial_id, pending.size());
        pending.push_back(PendingTrial{TrialRecord{header, {}}, poisoned_before});
        if (header.schema_version > kSchemaVersion || header.schema_version < 1) {
          report(header.trial_id, line_no, "UnknownSchemaVersion",
                 "schema_version " + std::to_string(header.schema_version) + " is not supported");
          abort_trial(header.trial_id);
        }
      } else if (record == "event") {
        if (trial_id.empty()) throw FieldError{"event without trial_id"};
        const auto it = index_of.find(trial_id);
        if (it == index_of.end()) {
          if (!poisoned.contains(trial_id)) {
            report(trial_id, line_no, "EventBeforeHeader", "event precedes its trial header");
          }
          poisoned.insert(trial_id);
          continue;
        }
        TraceEvent e = event_from_json(j);
        pending[it->second].record.events.push_back(std::move(e));
      } else {
        throw FieldError{"unknown record type '" + record + "'"};
      }
    } catch (const FieldError& err) {
      report(trial_id, line_no, "MalformedLine", err.message);
      if (!trial_id.empty()) abort_trial(trial_id);
    } catch (const json::exception& err) {
      report(trial_id, line_no, "MalformedLine", err.what());
      if (!trial_id.empty()) abort_trial(trial_id);
    }
  }

  for (PendingTrial& p : pending) {
    if (p.aborted) {
      result.rejected_trial_ids.push_back(p.record.header.trial_id);
      continue;
    }
    auto violations = validate_trial(p.record);
    if (!violations.empty()) {
      result.rejected_trial_ids.push_back(p.record.header.trial_id);
      for (auto& v : violations) result.violations.push_back(std::move(v));
      continue;
    }
    result.trials.push_back(std::move(p.record));
  }
  return result;
}

ParseResult parse_trace_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_trace(in);
}

ParseResult parse_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open trace file '" + path.string() + "'");
  return parse_trace(in);
}

ParseResult parse_trace_path(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(path, ec)) return parse_trace_file(path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl" &&
        entry.path().filename() != "embeddings.jsonl" && entry.path().filename() != "claims.jsonl") {
      files.push_back(entry.path());
    }
  }
  if (ec) throw Error(ErrorCode::IoFailure, "cannot list '" + path.string() + "': " + ec.message());
  std::sort(files.begin(), files.end());
  ParseResult merged;
  std::unordered_set<std::string> seen;
  for (const auto& file : files) {
    ParseResult part = parse_trace_file(file);
    for (auto& v : part.violations) merged.violations.push_back(std::move(v));
    for (auto& id : part.rejected_trial_ids) merged.rejected_trial_ids.push_back(std::move(id));
    for (auto& t : part.trials) {
      if (!seen.insert(t.header.trial_id).second) {
        merged.violations.push_back(
            Violation{t.header.trial_id, std::nullopt, "DuplicateTrialId", "trial_id repeated across files"});
        merged.rejected_trial_ids.push_back(t.header.trial_id);
        continue;
      }
      merged.trials.push_back(std::move(t));
    }
  }
  return merged;
}

void write_trace(std::ostream& out, std::span<const TrialRecord> trials) {
  for (const TrialRecord& trial : trials) {
    out << header_to_json(trial.header).dump() << '\n';
    for (const TraceEvent& e : trial.events) out << event_to_json(trial.header.trial_id, e).dump() << '\n';
  }
}

std::string serialize_trace(std::span<const TrialRecord> trials) {
  std::ostringstream out;
  write_trace(out, trials);
  return out.str();
}

void write_trace_file(const std::filesystem::path& path, std::span<const TrialRecord> trials) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write trace file '" + path.string() + "'");
  write_trace(out, trials);
  if (!out) throw Error(ErrorCode::IoFailure, "failed while writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Claim corpus and embedding sidecar

namespace {

std::vector<json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::vector<json> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no));
    }
    docs.push_back(std::move(j));
  }
  return docs;
}

std::vector<double> get_vector(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array()) throw Error(ErrorCode::MalformedLine, std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& x : v) {
    if (!x.is_number()) throw Error(ErrorCode::MalformedLine, std::string("non-numeric entry in '") + key + "'");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace

std::vector<ClaimPair> read_claim_corpus(const std::filesystem::path& path) {
  std::vector<ClaimPair> claims;
  std::optional<std::size_t> dim;
  for (const json& j : read_json_lines(path)) {
    ClaimPair c;
    try {
      c.claim_id = j.at("claim_id").get<std::string>();
      c.topic = j.at("topic").get<std::string>();
      c.side_a = j.at("side_a").get<std::string>();
      c.side_b = j.at("side_b").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedLine, std::string("claim record: ") + e.what());
    }
    if (c.side_a == c.side_b) throw Error(ErrorCode::InvalidTrial, "claim '" + c.claim_id + "' has identical sides");
    for (const char* key : {"embedding_a", "embedding_b"}) {
      if (!j.contains(key) || j.at(key).is_null()) continue;
      auto v = get_vector(j, key);
      if (dim && *dim != v.size()) {
        throw Error(ErrorCode::DimensionMismatch, "claim '" + c.claim_id + "' embedding dimension differs from corpus");
      }
      dim = v.size();
      (std::string_view(key) == "embedding_a" ? c.embedding_a : c.embedding_b) = std::move(v);
    }
    claims.push_back(std::move(c));
  }
  return claims;
}

void write_claim_corpus(const std::filesystem::path& path, std::span<const ClaimPair> claims) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  for (const ClaimPair& c : claims) {
    ordered_json j;
    j["claim_id"] = c.claim_id;
    j["topic"] = c.topic;
    j["side_a"] = c.side_a;
    j["side_b"] = c.side_b;
    if (c.embedding_a) j["embedding_a"] = *c.embedding_a;
    if (c.embedding_b) j["embedding_b"] = *c.embedding_b;
    out << j.dump() << '\n';
  }
}

std::vector<EmbeddingPair> read_embedding_sidecar(const std::filesystem::path& path) {
  std::vector<EmbeddingPair> pairs;
  for (const json& j : read_json_lines(path)) {
    EmbeddingPair p;
    p.trial_id = j.value("trial_id", "");
    p.claim_id = j.value("claim_id", "");
    p.claim_vector = get_vector(j, "claim_vector");
    p.task_vector = get_vector(j, "task_vector");
    if (p.claim_vector.size() != p.task_vector.size()) {
      throw Error(ErrorCode::DimensionMismatch, "embedding pair for trial '" + p.trial_id + "'");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_embedding_sidecar(const std::filesystem::path& path, std::span<const EmbeddingPair> pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  for (const EmbeddingPair& p : pairs) {
    ordered_json j;
    j["trial_id"] = p.trial_id;
    j["claim_id"] = p.claim_id;
    j["claim_vector"] = p.claim_vector;
    j["task_vector"] = p.task_vector;
    out << j.dump() << '\n';
  }
}

IrrelevanceSummary summarize_irrelevance(std::span<const EmbeddingPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no embedding pairs");
  std::vector<double> sims;
  sims.reserve(pairs.size());
  for (const EmbeddingPair& p : pairs) sims.push_back(cosine_similarity(p.claim_vector, p.task_vector));
  std::sort(sims.begin(), sims.end());
  IrrelevanceSummary s;
  s.n = sims.size();
  s.mean = mean(sims);
  s.median = quantile_type7_sorted(sims, 0.5);
  s.q1 = quantile_type7_sorted(sims, 0.25);
  s.q3 = quantile_type7_sorted(sims, 0.75);
  return s;
}

}  // namespace driftlab
