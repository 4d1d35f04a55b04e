#include "annotrace/json.hpp"

#include <cstdio>

namespace annotrace {

namespace {

[[noreturn]] void violation(std::string_view where, std::string_view key, std::string_view what) {
  throw Error(ErrorKind::SchemaViolation, std::string(where) + ": field '" + std::string(key) + "' " + std::string(what));
}

}  // namespace

namespace json_field {

const Json& require(const Json& obj, std::string_view key, std::string_view where) {
  if (!obj.is_object()) throw Error(ErrorKind::SchemaViolation, std::string(where) + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) violation(where, key, "is missing");
  return *it;
}

std::string string(const Json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) violation(where, key, "must be a string");
  return v.get<std::string>();
}

std::int64_t integer(const Json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) violation(where, key, "must be an integer");
  return v.get<std::int64_t>();
}

double number(const Json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) violation(where, key, "must be a number");
  return v.get<double>();
}

bool boolean(const Json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_boolean()) violation(where, key, "must be a boolean");
  return v.get<bool>();
}

const Json& array(const Json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_array()) violation(where, key, "must be an array");
  return v;
}

}  // namespace json_field

Json parse_json(std::string_view text, std::string_view where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::SchemaViolation, std::string(where) + ": " + e.what());
  }
}

std::string format_address(std::uint64_t address) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(address));
  return buf;
}

std::uint64_t parse_address(const Json& value, std::string_view where) {
  if (!value.is_string()) throw Error(ErrorKind::SchemaViolation, std::string(where) + ": address must be a hex string");
  const auto s = value.get<std::string>();
  if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) {
    throw Error(ErrorKind::SchemaViolation, std::string(where) + ": address '" + s + "' lacks 0x prefix");
  }
  std::uint64_t out = 0;
  for (std::size_t i = 2; i < s.size(); ++i) {
    const char c = s[i];
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw Error(ErrorKind::SchemaViolation, std::string(where) + ": bad hex digit in '" + s + "'");
    if (i > 17) throw Error(ErrorKind::SchemaViolation, std::string(where) + ": address '" + s + "' too wide");
    out = (out << 4) | static_cast<std::uint64_t>(d);
  }
  return out;
}

}  // namespace annotrace
