#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ppimtt {

// Shortest decimal text that parses back to the same value. Output is
// locale-independent, so files written from identical values are identical.
std::string format_double(double value);
std::string format_float(float value);

// Full-token parse; nullopt on trailing garbage or an empty token.
std::optional<double> parse_double(std::string_view token);
std::optional<long long> parse_integer(std::string_view token);

// Splits on runs of ASCII whitespace.
template <class Fn>
void for_each_token(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\r' ||
                                 text[pos] == '\n' || text[pos] == '\v' || text[pos] == '\f')) {
      ++pos;
    }
    std::size_t end = pos;
    while (end < text.size() && !(text[end] == ' ' || text[end] == '\t' || text[end] == '\r' ||
                                  text[end] == '\n' || text[end] == '\v' || text[end] == '\f')) {
      ++end;
    }
    if (end > pos) fn(text.substr(pos, end - pos));
    pos = end;
  }
}

}  // namespace ppimtt
