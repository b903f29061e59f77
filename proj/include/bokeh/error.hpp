#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bokeh {

enum class ErrorCode {
  // I/O and decoding
  IoError,
  DecodeError,
  UnsupportedFormat,
  NonFiniteDepth,
  NegativeDepth,
  MissingMeta,
  AdapterFailure,
  MissingScene,
  // argument and contract violations
  NonPositiveInput,
  DimensionMismatch,
  InvalidBladeCount,
  InvalidKnee,
  InvalidGain,
  InvalidThreshold,
  InvalidRatio,
  InvalidWeight,
  StepOutOfRange,
  ImageTooSmall,
  ZeroWeightSum,
  OperatorDimensionError,
  InvalidScore,
  EmptyPanel,
  MissingMetric,
  MissingMos,
  InvariantViolation,
  ValidationFailed,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::NonFiniteDepth: return "NonFiniteDepth";
    case ErrorCode::NegativeDepth: return "NegativeDepth";
    case ErrorCode::MissingMeta: return "MissingMeta";
    case ErrorCode::AdapterFailure: return "AdapterFailure";
    case ErrorCode::MissingScene: return "MissingScene";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidBladeCount: return "InvalidBladeCount";
    case ErrorCode::InvalidKnee: return "InvalidKnee";
    case ErrorCode::InvalidGain: return "InvalidGain";
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::InvalidRatio: return "InvalidRatio";
    case ErrorCode::InvalidWeight: return "InvalidWeight";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::ZeroWeightSum: return "ZeroWeightSum";
    case ErrorCode::OperatorDimensionError: return "OperatorDimensionError";
    case ErrorCode::InvalidScore: return "InvalidScore";
    case ErrorCode::EmptyPanel: return "EmptyPanel";
    case ErrorCode::MissingMetric: return "MissingMetric";
    case ErrorCode::MissingMos: return "MissingMos";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// True for failures caused by the environment (files, external commands)
/// rather than by invalid data. The CLI maps these to exit code 2.
constexpr bool is_io_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::DecodeError:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::MissingMeta:
    case ErrorCode::AdapterFailure:
    case ErrorCode::MissingScene:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace bokeh
