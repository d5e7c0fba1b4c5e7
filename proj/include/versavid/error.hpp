#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace versavid {

enum class ErrorCode {
  EmptyTruth,
  EmptyInput,
  InvalidEvent,
  InvalidConfig,
  UnparseableVerdict,
  BackendUnavailable,
  GroupTooSmall,
  UnknownToken,
  MissingReference,
  ShapeMismatch,
  TooLarge,
  InsufficientContext,
  IndexOutOfRange,
  ClipTooShort,
  InvalidTimeline,
  InvalidQaReference,
  AdapterMissing,
  RenderMismatch,
  WrongGroupSize,
  OutOfRangeScore,
  SchemaError,
  MissingTrace,
  MissingGroundTruth,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyTruth: return "EmptyTruth";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidEvent: return "InvalidEvent";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InsufficientContext: return "InsufficientContext";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ClipTooShort: return "ClipTooShort";
    case ErrorCode::InvalidTimeline: return "InvalidTimeline";
    case ErrorCode::InvalidQaReference: return "InvalidQaReference";
    case ErrorCode::AdapterMissing: return "AdapterMissing";
    case ErrorCode::RenderMismatch: return "RenderMismatch";
    case ErrorCode::WrongGroupSize: return "WrongGroupSize";
    case ErrorCode::OutOfRangeScore: return "OutOfRangeScore";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::MissingTrace: return "MissingTrace";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
  }
  return "Unknown";
}

/// Library-wide exception. Every failure path carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace versavid
