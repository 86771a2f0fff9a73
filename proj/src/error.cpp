#include "pathco/error.hpp"

namespace pathco {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::FewerThanTwoVoxels: return "FewerThanTwoVoxels";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DegenerateMask: return "DegenerateMask";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ZeroEDVolume: return "ZeroEDVolume";
    case ErrorCode::MissingHealthy: return "MissingHealthy";
    case ErrorCode::MissingPathology: return "MissingPathology";
    case ErrorCode::DegenerateAnchors: return "DegenerateAnchors";
    case ErrorCode::PhantomExceedsGrid: return "PhantomExceedsGrid";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonMonotoneMapping: return "NonMonotoneMapping";
    case ErrorCode::NTooSmall: return "NTooSmall";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::StepTooCoarse: return "StepTooCoarse";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::MissingExternalMap: return "MissingExternalMap";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::EmptySurface: return "EmptySurface";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::TooSmallGrid: return "TooSmallGrid";
  }
  return "Unknown";
}

}  // namespace pathco
