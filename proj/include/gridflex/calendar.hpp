#pragma once

#include <array>
#include <cmath>

namespace gridflex {

// Simulation calendar: one non-leap year starting Monday, January 1.
// Step 0 is Jan 1, 00:00; all series are anchored to it.

inline constexpr std::array<int, 12> kMonthDays = {31, 28, 31, 30, 31, 30,
                                                   31, 31, 30, 31, 30, 31};
inline constexpr int kDaysPerYear = 365;

struct CalendarStamp {
  int month = 0;         // 0..11
  int day_of_month = 1;  // 1..31
  int day_of_year = 0;   // 0..364
  int weekday = 0;       // 0 = Monday
  double hour_of_day = 0.0;
};

inline int steps_per_day(double dt_hours) {
  return static_cast<int>(std::lround(24.0 / dt_hours));
}

inline CalendarStamp stamp_of_step(long step, double dt_hours) {
  const int spd = steps_per_day(dt_hours);
  CalendarStamp s;
  s.day_of_year = static_cast<int>(step / spd) % kDaysPerYear;
  s.weekday = s.day_of_year % 7;
  s.hour_of_day = static_cast<double>(step % spd) * dt_hours;
  int d = s.day_of_year;
  for (int m = 0; m < 12; ++m) {
    if (d < kMonthDays[m]) {
      s.month = m;
      s.day_of_month = d + 1;
      break;
    }
    d -= kMonthDays[m];
  }
  return s;
}

inline long first_step_of_day(int day_of_year, double dt_hours) {
  return static_cast<long>(day_of_year) * steps_per_day(dt_hours);
}

// day_of_year of the first day of a month, 0-based month.
inline int first_day_of_month(int month) {
  int d = 0;
  for (int m = 0; m < month; ++m) d += kMonthDays[m];
  return d;
}

}  // namespace gridflex
