#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pathco {

enum class ErrorCode {
  InvalidArgument,
  ConfigError,
  InvariantViolation,
  IoFailure,
  // volume_core
  FewerThanTwoVoxels,
  EmptyMask,
  MalformedHeader,
  DimensionMismatch,
  TruncatedPayload,
  // severity / anchors
  DegenerateMask,
  EmptyInput,
  ZeroEDVolume,
  MissingHealthy,
  MissingPathology,
  DegenerateAnchors,
  // trajectory
  PhantomExceedsGrid,
  ZeroVector,
  NonMonotoneMapping,
  NTooSmall,
  // siv
  EmptyCohort,
  StepTooCoarse,
  // lattice / activation
  EmptySet,
  EmptyTrainSet,
  GeometryMismatch,
  MissingExternalMap,
  EmptyTable,
  // metrics
  EmptySurface,
  ZeroVariance,
  TooSmallGrid,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace pathco
