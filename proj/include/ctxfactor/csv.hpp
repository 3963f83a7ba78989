#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ctxfactor {

// Minimal strict CSV support for the plain comma-separated schemas used by
// this project (no quoting or embedded separators).

std::vector<std::string> split_csv_line(std::string_view line);

// Shortest round-trip decimal formatting, so rewriting parsed output is
// bit-stable across runs.
std::string format_double(double v);

std::int64_t parse_int64(std::string_view s, const std::string& context);
double parse_double(std::string_view s, const std::string& context);

}  // namespace ctxfactor
