#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dynsl {

/// Shortest decimal representation that parses back to the same double.
/// NaN is written as an empty field.
std::string format_number(double x);

/// Fixed-point formatting for human-readable tables.
std::string format_fixed(double x, int digits);

/// Splits one delimited line. Double-quoted fields may contain the delimiter;
/// a doubled quote inside quotes is a literal quote.
std::vector<std::string> split_delimited(std::string_view line, char delim);

/// Parses a full decimal number, rejecting trailing garbage. Empty -> nullopt-like NaN
/// is handled by the caller; this returns false on any parse failure.
bool parse_number(std::string_view field, double& out);

}  // namespace dynsl
