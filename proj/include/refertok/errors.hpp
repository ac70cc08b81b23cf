#pragma once

#include <stdexcept>
#include <string>

namespace refertok {

// Failure categories surfaced by the library. The CLI maps these onto
// process exit codes: Io -> 1, Format -> 2, Pipeline -> 3.
enum class ErrorKind {
  EmptyMask,
  EmptyInput,
  InvalidConfig,
  DimMismatch,
  FormatError,
  OutOfBounds,
  ZeroNormToken,
  DegenerateImage,
  NegativeTimestamp,
  MissingVision,
  UnexpectedVision,
  Overflow,
  IoError,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::ZeroNormToken: return "ZeroNormToken";
    case ErrorKind::DegenerateImage: return "DegenerateImage";
    case ErrorKind::NegativeTimestamp: return "NegativeTimestamp";
    case ErrorKind::MissingVision: return "MissingVision";
    case ErrorKind::UnexpectedVision: return "UnexpectedVision";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace refertok
