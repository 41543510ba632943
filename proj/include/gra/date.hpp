#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace gra {

// Calendar day stored as days since 1970-01-01.
struct Date {
  std::int32_t days = 0;

  static Date from_ymd(int year, unsigned month, unsigned day);
  // Parses "YYYY-MM-DD"; throws Error(Format) otherwise.
  static Date parse(std::string_view iso);
  std::string iso() const;

  Date operator+(std::int32_t n) const { return Date{days + n}; }
  std::int32_t operator-(Date other) const { return days - other.days; }
  Date operator-(std::int32_t n) const { return Date{days - n}; }
  auto operator<=>(const Date&) const = default;
};

}  // namespace gra
