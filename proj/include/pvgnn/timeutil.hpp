#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "pvgnn/errors.hpp"

namespace pvgnn {

struct CivilDate {
  int year;
  int month;  // 1..12
  int day;    // 1..31
};

// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
// algorithm, public domain).
inline int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(int64_t z) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

inline int64_t utc_timestamp(int y, int mo, int d, int h = 0, int mi = 0, int s = 0) {
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

// 1-based ordinal day within the year of a UTC timestamp.
inline int day_of_year(int64_t ts) {
  int64_t days = ts / 86400;
  if (ts < 0 && ts % 86400 != 0) --days;
  CivilDate cd = civil_from_days(days);
  return static_cast<int>(days - days_from_civil(cd.year, 1, 1)) + 1;
}

// Seconds since UTC midnight.
inline double seconds_of_day(int64_t ts) {
  int64_t r = ts % 86400;
  if (r < 0) r += 86400;
  return static_cast<double>(r);
}

// Accepts "YYYY-MM-DDTHH:MM:SS" with optional trailing "Z"; space instead of
// 'T' is tolerated.
inline int64_t parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, used = 0;
  char sep = 0;
  int n = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi,
                      &s, &used);
  bool ok = n == 7 && (sep == 'T' || sep == ' ');
  if (ok) {
    std::string tail = text.substr(static_cast<size_t>(used));
    ok = tail.empty() || tail == "Z";
  }
  if (!ok) throw ParseError("invalid ISO-8601 timestamp: '" + text + "'");
  if (mo < 1 || mo > 12 || d < 1 || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59)
    throw ParseError("out-of-range ISO-8601 timestamp: '" + text + "'");
  CivilDate back = civil_from_days(days_from_civil(y, mo, d));
  if (back.year != y || back.month != mo || back.day != d)
    throw ParseError("out-of-range ISO-8601 timestamp: '" + text + "'");
  return utc_timestamp(y, mo, d, h, mi, s);
}

inline std::string format_iso8601(int64_t ts) {
  int64_t days = ts / 86400;
  int64_t rem = ts % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  CivilDate cd = civil_from_days(days);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02lld:%02lld:%02lldZ", cd.year, cd.month,
                cd.day, static_cast<long long>(rem / 3600),
                static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
  return buf;
}

}  // namespace pvgnn
