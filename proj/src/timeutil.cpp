#include "ensbench/timeutil.hpp"

#include <cstdio>

#include "ensbench/error.hpp"

namespace ensbench {

using namespace std::chrono;

std::string format_time(TimePoint t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto hour = (t - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:00:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(hour));
  return buf;
}

TimePoint parse_time(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n < 3 || (n >= 4 && sep != 'T' && sep != ' ') || (n == 4) || (n == 5))
    fail(ErrorKind::Data, "malformed timestamp '" + text + "'");
  if (mi != 0 || s != 0) fail(ErrorKind::Data, "timestamp not on the hour: '" + text + "'");
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23) fail(ErrorKind::Data, "invalid timestamp '" + text + "'");
  return TimePoint{sys_days{ymd}} + hours{h};
}

CalendarInfo calendar(TimePoint t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto jan1 = sys_days{ymd.year() / January / 1};
  return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
          static_cast<int>((t - day).count()), static_cast<unsigned>((day - jan1).count() + 1)};
}

}  // namespace ensbench
