#pragma once

#include <stdexcept>
#include <string>

namespace catpose {

/// Failure categories raised by the library. Each operation documents the
/// subset it can produce.
enum class Errc {
  InvalidArgument,
  NonPositiveDepth,
  NonUnitAxis,
  DegenerateConfiguration,
  DegenerateSample,
  NoRealSolution,
  RankDeficient,
  DivergedBehindCamera,
  InsufficientCorrespondences,
  ConsensusNotFound,
  NonPositiveScale,
  NonPositiveResult,
  DimensionMismatch,
  RowNotStochastic,
  DegenerateExtent,
  EmptyList,
  NoGroundTruth,
  EmptyRecordSet,
  UnknownCategory,
  PlacementFailed,
  ParseError,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonPositiveDepth: return "NonPositiveDepth";
    case Errc::NonUnitAxis: return "NonUnitAxis";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::DegenerateSample: return "DegenerateSample";
    case Errc::NoRealSolution: return "NoRealSolution";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::DivergedBehindCamera: return "DivergedBehindCamera";
    case Errc::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case Errc::ConsensusNotFound: return "ConsensusNotFound";
    case Errc::NonPositiveScale: return "NonPositiveScale";
    case Errc::NonPositiveResult: return "NonPositiveResult";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::RowNotStochastic: return "RowNotStochastic";
    case Errc::DegenerateExtent: return "DegenerateExtent";
    case Errc::EmptyList: return "EmptyList";
    case Errc::NoGroundTruth: return "NoGroundTruth";
    case Errc::EmptyRecordSet: return "EmptyRecordSet";
    case Errc::UnknownCategory: return "UnknownCategory";
    case Errc::PlacementFailed: return "PlacementFailed";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// True for failures of a numerical procedure (as opposed to bad input data).
inline bool is_numerical_failure(Errc code) {
  switch (code) {
    case Errc::DegenerateConfiguration:
    case Errc::DegenerateSample:
    case Errc::NoRealSolution:
    case Errc::RankDeficient:
    case Errc::DivergedBehindCamera:
    case Errc::InsufficientCorrespondences:
    case Errc::ConsensusNotFound:
    case Errc::PlacementFailed:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        detail_(what) {}

  Errc code() const noexcept { return code_; }
  /// Message without the leading code name.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace catpose
