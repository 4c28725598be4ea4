// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/clock.hpp"

#include "evisearch/errors.hpp"

#include <cctype>
#include <cstdio>
#include <ctime>

namespace evisearch {

std::string iso8601(Clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
  return buf;
}

Clock::time_point parse_iso8601(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0, ms = 0, used = 0;
  const std::string str(s);
  const int n = std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &sec, &used);
  if (n < 6) throw ParseError("not an ISO-8601 timestamp: '" + str + "'");
  std::string_view rest = s.substr(static_cast<std::size_t>(used));
  if (!rest.empty() && rest.front() == '.') {
    std::size_t i = 1;
    int digits = 0;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) {
      if (digits < 3) ms = ms * 10 + (rest[i] - '0');
      ++digits;
      ++i;
    }
    if (digits == 0) throw ParseError("not an ISO-8601 timestamp: '" + str + "'");
    for (; digits < 3; ++digits) ms *= 10;
    rest = rest.substr(i);
  }
  if (rest != "Z" || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60)
    throw ParseError("not a UTC ISO-8601 timestamp: '" + str + "'");
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = sec;
  return Clock::time_point(std::chrono::seconds(timegm(&tm))) + std::chrono::milliseconds(ms);
}

}  // namespace evisearch
