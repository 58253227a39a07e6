#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

// Minimal RFC-4180 CSV output: fields containing commas, quotes, or line
// breaks are quoted with doubled inner quotes; numbers print in shortest
// round-trip form so files are byte-stable run to run.
namespace spr::csv {

[[nodiscard]] inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

[[nodiscard]] inline std::string field(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string field(std::uint64_t value) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string field(long long value) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string field(bool value) { return value ? "true" : "false"; }

// Missing values print as empty fields.
[[nodiscard]] inline std::string field(const std::optional<double>& value) {
  return value ? field(*value) : std::string();
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << escape(fields[i]);
  }
  os << '\n';
}

}  // namespace spr::csv
