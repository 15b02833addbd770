#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace evstar {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Splits on commas; surrounding blanks and a trailing CR are trimmed.
std::vector<std::string_view> split_csv(std::string_view line);

bool parse_double(std::string_view s, double& out);
bool parse_int64(std::string_view s, long long& out);

}  // namespace evstar
