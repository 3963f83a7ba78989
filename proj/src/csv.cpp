#include "ctxfactor/csv.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <system_error>

namespace ctxfactor {

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string format_double(double v) {
  char buf[64];
  // %.17g round-trips any double.
  int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  std::string s(buf, static_cast<std::size_t>(n));
  // Trim to the shortest representation that still round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    n = std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    auto [p, ec] = std::from_chars(buf, buf + n, back);
    if (ec == std::errc() && p == buf + n && back == v) {
      return std::string(buf, static_cast<std::size_t>(n));
    }
  }
  return s;
}

std::int64_t parse_int64(std::string_view s, const std::string& context) {
  std::int64_t value = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::runtime_error(context + ": expected an integer, got \"" + std::string(s) + "\"");
  }
  return value;
}

double parse_double(std::string_view s, const std::string& context) {
  double value = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::runtime_error(context + ": expected a number, got \"" + std::string(s) + "\"");
  }
  return value;
}

}  // namespace ctxfactor
