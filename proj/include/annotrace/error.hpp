#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace annotrace {

enum class ErrorKind {
  MissingFile,
  SchemaViolation,
  UnsortedEvents,
  OutOfBounds,
  DimensionMismatch,
  IndexOutOfRange,
  CorruptPatch,
  BackendUnavailable,
  BackendFailure,
  DuplicateAddress,
  DanglingXref,
  AmbiguousTarget,
  InsufficientFrames,
  IoFailure,
  BindFailure,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers can branch
/// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace annotrace
