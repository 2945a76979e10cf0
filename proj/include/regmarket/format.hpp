#pragma once

#include <array>
#include <charconv>
#include <string>

namespace regmarket {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

/// printf-style fixed formatting used by report tables.
inline std::string format_fixed(double v, int precision) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, precision);
  if (ec != std::errc()) return format_double(v);
  return std::string(buf.data(), ptr);
}

}  // namespace regmarket
