#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace migepi::csv {

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double value);

/// Throws IoError on malformed input.
double parse_double(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

std::string_view trim(std::string_view text);

}  // namespace migepi::csv
