#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hcdpi {

enum class ErrorCode {
  DegenerateDesign,
  ZeroCategory,
  ZeroProbability,
  InvalidDispersion,
  InvalidArgument,
  NotPSD,
  BracketError,
  InitializationError,
  DomainError,
  ParseError,
  ValidationError,
  IoError,
};

inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::ZeroCategory: return "ZeroCategory";
    case ErrorCode::ZeroProbability: return "ZeroProbability";
    case ErrorCode::InvalidDispersion: return "InvalidDispersion";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::BracketError: return "BracketError";
    case ErrorCode::InitializationError: return "InitializationError";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it to a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace hcdpi
