#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dtour {

enum class ErrorCode {
  DegenerateBasis,
  DimensionMismatch,
  DegeneratePointSet,
  TooFewKeyframes,
  EmptyPath,
  RankDeficient,
  TooManyPoints,
  LengthMismatch,
  AxisNotOrthogonal,
  InvalidArgument,
  ParseError,
  MissingColumn,
  EmptyDataset,
  BadMagic,
  TruncatedFile,
  VersionUnsupported,
  SchemaError,
  OrthonormalityViolation,
  BadPolygon,
  ProtocolViolation,
  BindFailure,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateBasis: return "DegenerateBasis";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegeneratePointSet: return "DegeneratePointSet";
    case ErrorCode::TooFewKeyframes: return "TooFewKeyframes";
    case ErrorCode::EmptyPath: return "EmptyPath";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::TooManyPoints: return "TooManyPoints";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AxisNotOrthogonal: return "AxisNotOrthogonal";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::OrthonormalityViolation: return "OrthonormalityViolation";
    case ErrorCode::BadPolygon: return "BadPolygon";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code. All library failures use it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Collects non-fatal conditions (dropped rows, zeroed columns, graph repairs).
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace dtour
