#include "driftlab/error.hpp"

namespace driftlab {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::UnknownSchemaVersion: return "UnknownSchemaVersion";
    case ErrorCode::DuplicateTrialId: return "DuplicateTrialId";
    case ErrorCode::EventBeforeHeader: return "EventBeforeHeader";
    case ErrorCode::InvalidTrial: return "InvalidTrial";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::MissingTaskBoundary: return "MissingTaskBoundary";
    case ErrorCode::NoCodeActivity: return "NoCodeActivity";
    case ErrorCode::MissingBaseline: return "MissingBaseline";
    case ErrorCode::MissingRank: return "MissingRank";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::BothEmpty: return "BothEmpty";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::VectorCountMismatch: return "VectorCountMismatch";
    case ErrorCode::TooFewTrials: return "TooFewTrials";
    case ErrorCode::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorCode::AllColumnsDropped: return "AllColumnsDropped";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::InvalidCondition: return "InvalidCondition";
    case ErrorCode::ConfigOutOfRange: return "ConfigOutOfRange";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MissingUpstream: return "MissingUpstream";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::NonFinite: return "NonFinite";
  }
  return "Unknown";
}

}  // namespace driftlab
