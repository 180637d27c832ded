#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace driftlab {

enum class ErrorCode {
  MalformedLine,
  UnknownSchemaVersion,
  DuplicateTrialId,
  EventBeforeHeader,
  InvalidTrial,
  DimensionMismatch,
  ZeroVector,
  EmptyInput,
  EmptyGroup,
  MissingTaskBoundary,
  NoCodeActivity,
  MissingBaseline,
  MissingRank,
  EmptyReference,
  BothEmpty,
  VocabularyMismatch,
  VectorCountMismatch,
  TooFewTrials,
  ZeroVarianceColumn,
  AllColumnsDropped,
  DegenerateVariance,
  ZeroReference,
  InvalidCondition,
  ConfigOutOfRange,
  IoFailure,
  MissingUpstream,
  UsageError,
  NonFinite,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code so the
/// CLI can map it onto an exit status and tests can assert on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace driftlab
