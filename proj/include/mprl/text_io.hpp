#pragma once

// Locale-independent number formatting shared by the file formats.

#include <string>
#include <string_view>
#include <vector>

namespace mprl::text {

// 17 significant digits; parses back to the identical double.
std::string format_double(double value);

// Fixed notation with the given number of decimals.
std::string format_fixed(double value, int decimals);

double parse_double(std::string_view token);
long long parse_int(std::string_view token);

// Splits on runs of spaces and tabs.
std::vector<std::string_view> split_whitespace(std::string_view line);

std::string_view trim(std::string_view s);

}  // namespace mprl::text
