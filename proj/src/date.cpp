#include "agal/date.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "agal/error.hpp"

namespace agal {

namespace chr = std::chrono;

Date make_date(int year, unsigned month, unsigned day) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) {
    throw Error(ErrorKind::invalid_input, fmt::format("invalid calendar date {}-{}-{}", year, month, day));
  }
  return Date{ymd};
}

namespace {

int parse_field(std::string_view text, std::string_view whole) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::invalid_input, fmt::format("malformed date '{}'", whole));
  }
  return value;
}

}  // namespace

Date parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw Error(ErrorKind::invalid_input, fmt::format("malformed date '{}', expected YYYY-MM-DD", text));
  }
  const int y = parse_field(text.substr(0, 4), text);
  const int m = parse_field(text.substr(5, 2), text);
  const int d = parse_field(text.substr(8, 2), text);
  if (m < 1 || d < 1) {
    throw Error(ErrorKind::invalid_input, fmt::format("malformed date '{}'", text));
  }
  return make_date(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

std::string format_date(Date date) {
  const chr::year_month_day ymd{date};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

bool is_weekend(Date date) {
  const chr::weekday wd{date};
  return wd == chr::Saturday || wd == chr::Sunday;
}

int month_key(Date date) {
  const chr::year_month_day ymd{date};
  return static_cast<int>(ymd.year()) * 12 + static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
}

long week_key(Date date) {
  // 1970-01-01 was a Thursday; shifting by 3 days aligns week boundaries on Mondays.
  const long days = date.time_since_epoch().count() + 3;
  return days >= 0 ? days / 7 : (days - 6) / 7;
}

std::vector<Date> business_days(Date start, std::size_t count) {
  std::vector<Date> out;
  out.reserve(count);
  Date d = start;
  while (out.size() < count) {
    if (!is_weekend(d)) out.push_back(d);
    d += chr::days{1};
  }
  return out;
}

std::size_t find_date(const std::vector<Date>& axis, Date date) {
  const auto it = std::lower_bound(axis.begin(), axis.end(), date);
  if (it == axis.end() || *it != date) return npos;
  return static_cast<std::size_t>(it - axis.begin());
}

}  // namespace agal
