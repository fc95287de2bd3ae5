#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace holonome {

/// Shortest decimal text that reads back to exactly `x` (at most 17
/// significant digits).
inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace holonome
