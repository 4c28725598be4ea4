// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace evisearch {

/// Malformed input record (bad JSON, unknown enum value, missing field).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what, std::vector<std::string> offenders = {})
      : std::runtime_error(what), offenders_(std::move(offenders)) {}

  const std::vector<std::string>& offenders() const noexcept { return offenders_; }

 private:
  std::vector<std::string> offenders_;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transient failure (transport, provider outage). Callers may retry.
class RetryableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evisearch
