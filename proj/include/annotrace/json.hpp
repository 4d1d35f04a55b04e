#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

#include "annotrace/error.hpp"

namespace annotrace {

using Json = nlohmann::ordered_json;

/// Field accessors that turn type and presence errors into
/// Error(SchemaViolation) naming `where` and the field.
namespace json_field {

const Json& require(const Json& obj, std::string_view key, std::string_view where);
std::string string(const Json& obj, std::string_view key, std::string_view where);
std::int64_t integer(const Json& obj, std::string_view key, std::string_view where);
double number(const Json& obj, std::string_view key, std::string_view where);
bool boolean(const Json& obj, std::string_view key, std::string_view where);
const Json& array(const Json& obj, std::string_view key, std::string_view where);

}  // namespace json_field

/// Parses a JSON document, mapping parse errors to SchemaViolation.
Json parse_json(std::string_view text, std::string_view where);

/// "0x…" lowercase hex rendering used by every on-disk address field.
std::string format_address(std::uint64_t address);
std::uint64_t parse_address(const Json& value, std::string_view where);

}  // namespace annotrace
