#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace annotrace {

/// Milliseconds since the Unix epoch (UTC).
struct Timestamp {
  std::int64_t millis_utc = 0;

  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t ms) : millis_utc(ms) {}

  constexpr auto operator<=>(const Timestamp&) const = default;

  constexpr Timestamp operator+(std::int64_t ms) const { return Timestamp{millis_utc + ms}; }
  constexpr Timestamp operator-(std::int64_t ms) const { return Timestamp{millis_utc - ms}; }
  constexpr std::int64_t operator-(Timestamp other) const { return millis_utc - other.millis_utc; }
};

/// "HH:MM:SS.mmm" in UTC, for logs and human-readable reports.
std::string format_clock(Timestamp t);

}  // namespace annotrace
