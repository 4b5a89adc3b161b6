#pragma once

#include <chrono>
#include <string>

namespace ensbench {

using TimePoint = std::chrono::sys_time<std::chrono::hours>;

/// "YYYY-MM-DDTHH:00:00Z"
std::string format_time(TimePoint t);

/// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" and "YYYY-MM-DDTHH:MM[:SS][Z]".
/// Minutes and seconds must be zero. Throws Data on malformed input.
TimePoint parse_time(const std::string& text);

struct CalendarInfo {
  int year;
  unsigned month;  // 1..12
  int hour;        // 0..23
  unsigned day_of_year;  // 1..366
};
CalendarInfo calendar(TimePoint t);

}  // namespace ensbench
