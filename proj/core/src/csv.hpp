#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "cdp/error.hpp"

namespace cdp::detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

// Reads a headed CSV. The header must match `header` exactly (after
// trimming). Blank lines are skipped. `fn(fields, line_number)` per row.
template <typename Fn>
void read_csv(const std::filesystem::path& path, std::string_view header, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (view.empty()) continue;
    if (!seen_header) {
      if (view != header)
        fail(Errc::malformed, path.string() + ": expected header '" + std::string(header) + "'");
      seen_header = true;
      continue;
    }
    fn(split_fields(view), line_no);
  }
  if (!seen_header) fail(Errc::malformed, path.string() + ": missing header");
}

template <typename T>
T parse_number(std::string_view text, const std::filesystem::path& path, std::size_t line_no) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty())
    fail(Errc::malformed, path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                              std::string(text) + "'");
  return value;
}

}  // namespace cdp::detail
