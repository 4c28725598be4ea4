// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace evisearch {

class Clock {
 public:
  using time_point = std::chrono::system_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() const = 0;
};

class SystemClock final : public Clock {
 public:
  time_point now() const override { return std::chrono::system_clock::now(); }
};

/// Always returns the same instant. Used for reproducible runs.
class FixedClock final : public Clock {
 public:
  explicit FixedClock(time_point t = time_point{}) : t_(t) {}
  time_point now() const override { return t_; }

 private:
  time_point t_;
};

/// UTC, millisecond precision: 2026-01-01T00:00:00.000Z
std::string iso8601(Clock::time_point t);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z". Throws ParseError.
Clock::time_point parse_iso8601(std::string_view s);

}  // namespace evisearch
