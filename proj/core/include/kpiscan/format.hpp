#pragma once

#include <string>

namespace kpiscan {

/// Shortest decimal text that parses back to exactly `value`.
void append_double(std::string& out, double value);
std::string format_double(double value);

/// Fixed-precision text for human-facing tables.
std::string format_fixed(double value, int digits);

}  // namespace kpiscan
