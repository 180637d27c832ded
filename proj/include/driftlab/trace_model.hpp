#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace driftlab {

inline constexpr int kSchemaVersion = 1;

enum class Tactic { Baseline, LogicalAppeal, AuthorityEndorsement, EvidenceBased, PrimingUrgency, Anchoring };
enum class Condition { C0, C1, C2, C0P, B, NB };
enum class TaskType { Opinion, Coding, Web };
enum class Stance { A, B, Unparsed };
enum class ProbePhase { Initial, Post, Final };
enum class InjectionKind { Neutral, Persuasive };
enum class TaskStatus { Completed, Terminated, Aborted };

inline constexpr Tactic kAllTactics[] = {Tactic::Baseline,       Tactic::LogicalAppeal,
                                         Tactic::AuthorityEndorsement, Tactic::EvidenceBased,
                                         Tactic::PrimingUrgency, Tactic::Anchoring};
inline constexpr Condition kAllConditions[] = {Condition::C0,  Condition::C1, Condition::C2,
                                               Condition::C0P, Condition::B,  Condition::NB};

/// Known persona labels; the persona field itself is a free string.
inline constexpr std::string_view kKnownPersonas[] = {"Neutral", "GPT",     "Claude", "LLaMA",
                                                      "Mistral", "Qwen",    "Gemini"};

std::string_view to_string(Tactic v) noexcept;
std::string_view to_string(Condition v) noexcept;
std::string_view to_string(TaskType v) noexcept;
std::string_view to_string(Stance v) noexcept;
std::string_view to_string(ProbePhase v) noexcept;
std::string_view to_string(InjectionKind v) noexcept;
std::string_view to_string(TaskStatus v) noexcept;

/// Human-facing tactic label ("Authority Endorsement").
std::string_view display_name(Tactic v) noexcept;

std::optional<Tactic> parse_tactic(std::string_view s) noexcept;
std::optional<Condition> parse_condition(std::string_view s) noexcept;
std::optional<TaskType> parse_task_type(std::string_view s) noexcept;

/// C0P, B and NB: belief stated at task time, no probing.
constexpr bool is_prefill(Condition c) noexcept {
  return c == Condition::C0P || c == Condition::B || c == Condition::NB;
}
constexpr bool requires_probes(Condition c) noexcept { return !is_prefill(c); }
constexpr bool requires_baseline_tactic(Condition c) noexcept {
  return c == Condition::C0 || is_prefill(c);
}

struct TrialHeader {
  std::string trial_id;
  std::string backbone;
  std::string persona;
  Tactic tactic = Tactic::Baseline;
  Condition condition = Condition::C0;
  TaskType task_type = TaskType::Opinion;
  std::string claim_id;
  std::uint64_t distractor_count = 0;
  std::uint64_t seed = 0;
  int schema_version = kSchemaVersion;

  bool operator==(const TrialHeader&) const = default;
};

namespace event {
struct StanceProbe {
  ProbePhase phase = ProbePhase::Initial;
  Stance stance = Stance::Unparsed;
  std::string raw_text;
  bool operator==(const StanceProbe&) const = default;
};
struct Injection {
  InjectionKind injection_kind = InjectionKind::Neutral;
  std::string text;
  bool operator==(const Injection&) const = default;
};
struct Commitment {
  bool operator==(const Commitment&) const = default;
};
struct Distractor {
  std::uint64_t index = 0;
  bool operator==(const Distractor&) const = default;
};
struct TaskStart {
  bool operator==(const TaskStart&) const = default;
};
struct Search {
  std::string query;
  bool operator==(const Search&) const = default;
};
struct Visit {
  std::string url;
  std::string domain;
  bool operator==(const Visit&) const = default;
};
struct Summarize {
  bool operator==(const Summarize&) const = default;
};
struct ToolCall {
  std::string tool_name;
  bool operator==(const ToolCall&) const = default;
};
struct CodeExec {
  bool passed = false;
  bool operator==(const CodeExec&) const = default;
};
struct CodeRevision {
  std::uint64_t lines_changed = 1;
  bool operator==(const CodeRevision&) const = default;
};
struct TaskEnd {
  TaskStatus status = TaskStatus::Completed;
  bool operator==(const TaskEnd&) const = default;
};
}  // namespace event

// Variant alternative order matches EventKind.
using EventPayload =
    std::variant<event::StanceProbe, event::Injection, event::Commitment, event::Distractor,
                 event::TaskStart, event::Search, event::Visit, event::Summarize, event::ToolCall,
                 event::CodeExec, event::CodeRevision, event::TaskEnd>;

enum class EventKind {
  StanceProbe,
  Injection,
  Commitment,
  Distractor,
  TaskStart,
  Search,
  Visit,
  Summarize,
  ToolCall,
  CodeExec,
  CodeRevision,
  TaskEnd,
};

std::string_view to_string(EventKind v) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

struct TraceEvent {
  double t = 0.0;
  EventPayload payload;

  EventKind kind() const noexcept { return static_cast<EventKind>(payload.index()); }
  template <typename T>
  const T* as() const noexcept {
    return std::get_if<T>(&payload);
  }
  bool operator==(const TraceEvent&) const = default;
};

struct TrialRecord {
  TrialHeader header;
  std::vector<TraceEvent> events;

  bool operator==(const TrialRecord&) const = default;
};

/// One rejected rule. `line` is set for problems tied to a specific input line.
struct Violation {
  std::string trial_id;
  std::optional<std::size_t> line;
  std::string rule;
  std::string message;
};

struct ParseResult {
  std::vector<TrialRecord> trials;
  std::vector<Violation> violations;
  std::vector<std::string> rejected_trial_ids;
};

/// Reads a JSON-lines trace stream. Trials that fail to parse or validate are
/// dropped and reported; every other trial loads, in header order.
ParseResult parse_trace(std::istream& in);
ParseResult parse_trace_text(std::string_view text);
/// Throws IoFailure when the file cannot be opened.
ParseResult parse_trace_file(const std::filesystem::path& path);
/// Every `*.jsonl` file under a directory (sorted by name), or a single file.
ParseResult parse_trace_path(const std::filesystem::path& path);

/// Checks the joint header/event invariants of one trial.
std::vector<Violation> validate_trial(const TrialRecord& trial);

/// Canonical serialization: fixed key order, one record per line.
void write_trace(std::ostream& out, std::span<const TrialRecord> trials);
std::string serialize_trace(std::span<const TrialRecord> trials);
void write_trace_file(const std::filesystem::path& path, std::span<const TrialRecord> trials);

/// A/B when the first whitespace-delimited token is "(A)", "A" or "A."
/// (case-insensitive), likewise for B; Unparsed otherwise.
Stance parse_stance(std::string_view raw_text) noexcept;

/// Lowercased host of a URL with any leading "www." removed.
std::string registrable_domain(std::string_view url);

struct ClaimPair {
  std::string claim_id;
  std::string topic;
  std::string side_a;
  std::string side_b;
  std::optional<std::vector<double>> embedding_a;
  std::optional<std::vector<double>> embedding_b;
};

/// One JSON document per line. Throws InvalidTrial when side_a == side_b and
/// DimensionMismatch when embedding dimensions differ within the corpus.
std::vector<ClaimPair> read_claim_corpus(const std::filesystem::path& path);
void write_claim_corpus(const std::filesystem::path& path, std::span<const ClaimPair> claims);

/// Externally computed embeddings of an injected claim and the downstream
/// task prompt for one trial.
struct EmbeddingPair {
  std::string trial_id;
  std::string claim_id;
  std::vector<double> claim_vector;
  std::vector<double> task_vector;
};

std::vector<EmbeddingPair> read_embedding_sidecar(const std::filesystem::path& path);
void write_embedding_sidecar(const std::filesystem::path& path, std::span<const EmbeddingPair> pairs);

struct IrrelevanceSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Claim-vs-task cosine similarity summary. Throws EmptyInput when empty.
IrrelevanceSummary summarize_irrelevance(std::span<const EmbeddingPair> pairs);

}  // namespace driftlab
