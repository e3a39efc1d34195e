#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mprl {

enum class ErrorKind {
  InvalidDimension,
  InvalidClass,
  InvalidState,
  InvalidConfig,
  GenerationFailure,
  ProtocolViolation,
  NotRecorded,
  ParseError,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "InvalidDimension";
    case ErrorKind::InvalidClass: return "InvalidClass";
    case ErrorKind::InvalidState: return "InvalidState";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::GenerationFailure: return "GenerationFailure";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::NotRecorded: return "NotRecorded";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace mprl
