#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace annotrace {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);

}  // namespace annotrace
