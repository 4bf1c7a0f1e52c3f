#pragma once

#include <charconv>
#include <string>

namespace texmatch {

/// Shortest decimal that round-trips to the same double.
inline std::string format_number(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

}  // namespace texmatch
