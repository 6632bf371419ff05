#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "corrpost/common/errors.hpp"

namespace corrpost::csv {

/// Shortest text that parses back to the same double (17 significant digits).
inline std::string format_real(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, end);
}

template <typename T>
T parse_number(std::string_view field, std::string_view what, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw IoError(std::string(what) + " line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

/// Plain comma split; fields never contain commas or quotes.
inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

/// Calls body(fields, line_no) for each non-empty data line after checking
/// the header.
template <typename Body>
void for_each_row(std::string_view text, std::string_view header, std::size_t width, std::string_view what,
                  Body&& body) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line_no == 1) {
      if (line != header) throw IoError(std::string(what) + ": unexpected header");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != width) {
      throw IoError(std::string(what) + " line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                    " fields");
    }
    body(f, line_no);
  }
  if (!saw_header) throw IoError(std::string(what) + ": missing header");
}

}  // namespace corrpost::csv
