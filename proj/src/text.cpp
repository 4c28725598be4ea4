// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace evisearch::text {
namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_alnum(char c) { return is_digit(c) || is_alpha(c); }

// Length of a thousands-grouped integer "1,234,567" starting at pos, or 0.
std::size_t grouped_integer_length(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  while (i < s.size() && is_digit(s[i])) ++i;
  const std::size_t lead = i - pos;
  if (lead == 0 || lead > 3) return 0;
  std::size_t groups = 0;
  while (i + 3 < s.size()) {
    if (s[i] != ',') break;
    if (!is_digit(s[i + 1]) || !is_digit(s[i + 2]) || !is_digit(s[i + 3])) break;
    if (i + 4 < s.size() && is_digit(s[i + 4])) break;
    i += 4;
    ++groups;
  }
  return groups > 0 ? i - pos : 0;
}

}  // namespace

std::string canonical_number(double v) {
  if (v == 0.0) v = 0.0;  // fold -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  return buf;
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const bool sign = (c == '-' || c == '+') && i + 1 < s.size() &&
                      (is_digit(s[i + 1]) || (s[i + 1] == '.' && i + 2 < s.size() && is_digit(s[i + 2]))) &&
                      (i == 0 || !is_alnum(s[i - 1]));
    const bool leading_dot = c == '.' && i + 1 < s.size() && is_digit(s[i + 1]) &&
                             (i == 0 || !is_alnum(s[i - 1]));
    if (is_digit(c) || sign || leading_dot) {
      const std::size_t start = i;
      bool negative = false;
      if (sign) {
        negative = c == '-';
        ++i;
      }
      std::string digits;
      if (const std::size_t g = grouped_integer_length(s, i); g > 0) {
        for (std::size_t j = i; j < i + g; ++j)
          if (s[j] != ',') digits.push_back(s[j]);
        i += g;
      } else {
        while (i < s.size() && is_digit(s[i])) digits.push_back(s[i++]);
      }
      if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
        digits.push_back('.');
        ++i;
        while (i < s.size() && is_digit(s[i])) digits.push_back(s[i++]);
      }
      if (digits.empty() || digits == ".") {
        i = start + 1;
        continue;
      }
      if (digits.front() == '.') digits.insert(digits.begin(), '0');
      double v = 0.0;
      std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (negative) v = -v;
      if (i < s.size() && s[i] == '%') ++i;
      out.push_back(Token{TokenKind::kNumber, canonical_number(v), v});
      continue;
    }
    if (is_alpha(c)) {
      const std::size_t start = i;
      while (i < s.size() && is_alpha(s[i])) ++i;
      out.push_back(Token{TokenKind::kWord, std::string(s.substr(start, i - start)), 0.0});
      continue;
    }
    ++i;
  }
  return out;
}

std::vector<double> extract_numbers(std::string_view s) {
  std::vector<double> out;
  for (const auto& t : tokenize(s))
    if (t.kind == TokenKind::kNumber) out.push_back(t.number);
  return out;
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_not_reported(std::string_view value) {
  return to_lower(normalize_whitespace(value)) == to_lower(kNotReported);
}

std::vector<std::string> token_set(std::string_view s) {
  std::set<std::string> seen;
  for (const auto& t : tokenize(s)) seen.insert(t.kind == TokenKind::kWord ? to_lower(t.text) : t.text);
  return {seen.begin(), seen.end()};
}

}  // namespace evisearch::text
