#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "engram/errors.hpp"

namespace engram {

/// UTC instant at millisecond resolution. Snapshots store instants at this
/// resolution, so round-trips are exact.
using Instant = std::chrono::sys_time<std::chrono::milliseconds>;
using Millis = std::chrono::milliseconds;

inline Instant epoch() { return Instant{Millis{0}}; }

inline Instant from_unix_millis(std::int64_t ms) { return Instant{Millis{ms}}; }
inline std::int64_t to_unix_millis(Instant t) { return t.time_since_epoch().count(); }

/// Rounds to the nearest millisecond; truncating would turn 7 minutes into
/// 419999 ms.
inline Instant add_hours(Instant t, double hours) { return t + Millis{std::llround(hours * 3'600'000.0)}; }
inline Instant add_minutes(Instant t, double minutes) { return add_hours(t, minutes / 60.0); }

/// Signed elapsed time from `from` to `to`, in fractional hours.
inline double hours_between(Instant from, Instant to) {
  return std::chrono::duration<double, std::ratio<3600>>(to - from).count();
}

namespace detail {

inline int parse_digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) throw Error(Errc::ParseError, "truncated timestamp");
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') throw Error(Errc::ParseError, "bad digit in timestamp");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM:SS[.fraction](Z|+HH:MM|-HH:MM)`. Fractions finer
/// than a millisecond are truncated.
inline Instant parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  using detail::parse_digits;
  auto expect = [&](std::size_t pos, char c) {
    if (pos >= s.size() || (s[pos] != c && !(c == 'T' && (s[pos] == 't' || s[pos] == ' '))))
      throw Error(Errc::ParseError, "malformed timestamp '" + std::string(s) + "'");
  };
  const int y = parse_digits(s, 0, 4);
  expect(4, '-');
  const int mo = parse_digits(s, 5, 2);
  expect(7, '-');
  const int d = parse_digits(s, 8, 2);
  expect(10, 'T');
  const int hh = parse_digits(s, 11, 2);
  expect(13, ':');
  const int mm = parse_digits(s, 14, 2);
  expect(16, ':');
  const int ss = parse_digits(s, 17, 2);
  std::size_t pos = 19;
  std::int64_t millis = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int scale = 100;
    std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (scale > 0) millis += (s[pos] - '0') * scale;
      scale /= 10;
      ++pos;
    }
    if (pos == start) throw Error(Errc::ParseError, "empty fraction in timestamp");
  }
  std::int64_t offset_min = 0;
  if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
    ++pos;
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    const int sign = s[pos] == '-' ? -1 : 1;
    const int oh = parse_digits(s, pos + 1, 2);
    expect(pos + 3, ':');
    const int om = parse_digits(s, pos + 4, 2);
    offset_min = sign * (oh * 60 + om);
    pos += 6;
  } else {
    throw Error(Errc::ParseError, "timestamp lacks zone designator '" + std::string(s) + "'");
  }
  if (pos != s.size()) throw Error(Errc::ParseError, "trailing characters in timestamp");

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60)
    throw Error(Errc::ParseError, "out-of-range timestamp '" + std::string(s) + "'");
  auto t = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} + Millis{millis};
  return time_point_cast<Millis>(t - minutes{offset_min});
}

/// Formats as `YYYY-MM-DDTHH:MM:SS[.mmm]Z`; the fraction is omitted when zero.
inline std::string format_rfc3339(Instant t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[40];
  const auto ms = hms.subseconds().count();
  if (ms != 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                  int(hms.minutes().count()), int(hms.seconds().count()), int(ms));
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                  int(hms.minutes().count()), int(hms.seconds().count()));
  }
  return buf;
}

}  // namespace engram
