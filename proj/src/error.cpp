#include "annotrace/error.hpp"

#include <cstdio>

#include "annotrace/timestamp.hpp"

namespace annotrace {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::UnsortedEvents: return "UnsortedEvents";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::CorruptPatch: return "CorruptPatch";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::BackendFailure: return "BackendFailure";
    case ErrorKind::DuplicateAddress: return "DuplicateAddress";
    case ErrorKind::DanglingXref: return "DanglingXref";
    case ErrorKind::AmbiguousTarget: return "AmbiguousTarget";
    case ErrorKind::InsufficientFrames: return "InsufficientFrames";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

std::string format_clock(Timestamp t) {
  std::int64_t ms = t.millis_utc % 86'400'000;
  if (ms < 0) ms += 86'400'000;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d:%02d.%03d", static_cast<int>(ms / 3'600'000),
                static_cast<int>(ms / 60'000 % 60), static_cast<int>(ms / 1000 % 60),
                static_cast<int>(ms % 1000));
  return buf;
}

}  // namespace annotrace
