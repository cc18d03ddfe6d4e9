#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

namespace stifle_tpa {

/// Fixed-point rendering used for every reported angle ("20.537").
inline std::string fixed(double value, int decimals = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string out(buf);
  // no "-0.000"
  if (out.size() > 1 && out[0] == '-' && out.find_first_not_of("-0.") == std::string::npos) {
    out.erase(0, 1);
  }
  return out;
}

/// Shortest decimal that parses back to the same double.
inline std::string shortest(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

inline std::string csv_join(std::string_view sep, auto const& items) {
  std::string out;
  bool first = true;
  for (const auto& item : items) {
    if (!first) out += sep;
    out += item;
    first = false;
  }
  return out;
}

}  // namespace stifle_tpa
