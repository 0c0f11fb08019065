// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace t3kit::csv {

/// Splits one line on commas. Fields are unquoted; surrounding spaces and a
/// trailing CR are stripped.
inline std::vector<std::string> split(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline long to_int(const std::string& s, const std::string& context) {
  long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument(context + ": expected an integer, got '" + s + "'");
  return v;
}

/// Reads a header row followed by data rows, skipping blank lines.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Table read(std::istream& in, const std::string& context) {
  Table t;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (!have_header) {
      if (!fields.empty() && fields.front().size() >= 3 && fields.front().compare(0, 3, "\xEF\xBB\xBF") == 0)
        fields.front().erase(0, 3);
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw std::invalid_argument(context + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw std::invalid_argument(context + ": missing header row");
  return t;
}

}  // namespace t3kit::csv
