#pragma once

// Line-oriented helpers shared by the dataset and checkpoint formats.

#include "wsml/types.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace wsml::detail {

/// Shortest text that reads back to exactly the same double.
inline std::string format_real(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Reads content lines, skipping '#' comment lines, while tracking the
/// physical line number for diagnostics.
class LineReader {
 public:
  explicit LineReader(std::istream &in) : in_(in) {}

  /// Next non-comment line; throws ParseError at end of input.
  std::string_view next(char const *expecting) {
    while (std::getline(in_, buf_)) {
      ++line_;
      if (!buf_.empty() && buf_[0] == '#') continue;
      return buf_;
    }
    ++line_;
    throw ParseError(std::string("unexpected end of file, expected ") + expecting, line_);
  }

  /// True if a further non-comment, non-blank line exists (consumes comments).
  bool peek_content(std::string &out) {
    while (std::getline(in_, buf_)) {
      ++line_;
      if (buf_.empty() || buf_[0] == '#') continue;
      out = buf_;
      return true;
    }
    return false;
  }

  long line() const noexcept { return line_; }

 private:
  std::istream &in_;
  std::string buf_;
  long line_ = 0;
};

inline Real parse_real(std::string_view tok, long line) {
  Real v{};
  auto const *end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw ParseError("malformed real '" + std::string(tok) + "'", line);
  }
  return v;
}

inline long long parse_integer(std::string_view tok, long line) {
  long long v{};
  auto const *end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw ParseError("malformed integer '" + std::string(tok) + "'", line);
  }
  return v;
}

inline std::vector<std::string_view> expect_fields(std::string_view line, std::size_t n,
                                                   long lineno) {
  auto f = split_ws(line);
  if (f.size() != n) {
    throw ParseError("expected " + std::to_string(n) + " fields, found " +
                         std::to_string(f.size()),
                     lineno);
  }
  return f;
}

/// Next content line split into exactly n fields.
inline std::vector<std::string_view> next_fields(LineReader &reader, char const *expecting,
                                                 std::size_t n) {
  auto line = reader.next(expecting);
  return expect_fields(line, n, reader.line());
}

} // namespace wsml::detail
