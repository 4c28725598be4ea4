// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace evisearch::text {

/// Canonical missing-value sentinel shared by agents, reconciler and evaluation.
inline constexpr std::string_view kNotReported = "Not reported";

enum class TokenKind { kWord, kNumber };

struct Token {
  TokenKind kind;
  std::string text;  // words verbatim; numbers in canonical form (see canonical_number)
  double number = 0.0;

  bool operator==(const Token&) const = default;
};

/// Splits into word and number tokens; punctuation and non-ASCII bytes separate tokens.
///
/// Numbers keep a leading minus only when it is not glued to a preceding
/// alphanumeric (so "0.51-0.76" is a range, "-0.5" is negative). Digit groups
/// of the form 1,234,567 are read as thousands; a trailing % is dropped.
std::vector<Token> tokenize(std::string_view s);

std::vector<double> extract_numbers(std::string_view s);

std::string canonical_number(double v);

/// Trim and collapse internal whitespace runs to a single space.
std::string normalize_whitespace(std::string_view s);

std::string to_lower(std::string_view s);

bool is_not_reported(std::string_view value);

/// Lowercased word/number token set, used by the fallback free-text judge.
std::vector<std::string> token_set(std::string_view s);

}  // namespace evisearch::text
