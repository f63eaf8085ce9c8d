#include "kpiscan/format.hpp"

#include <charconv>
#include <cstdio>
#include <system_error>

namespace kpiscan {

void append_double(std::string& out, double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) {
    out += "nan";
    return;
  }
  out.append(buf, end);
}

std::string format_double(double value) {
  std::string s;
  append_double(s, value);
  return s;
}

std::string format_fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

}  // namespace kpiscan
