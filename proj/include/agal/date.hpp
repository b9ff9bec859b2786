#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace agal {

using Date = std::chrono::sys_days;

Date make_date(int year, unsigned month, unsigned day);

/// Parses an ISO-8601 calendar date (YYYY-MM-DD).
Date parse_date(std::string_view text);
std::string format_date(Date date);

bool is_weekend(Date date);

/// Months since year 0; equal keys mean the same calendar month.
int month_key(Date date);

/// Monday-based calendar week index; equal keys mean the same week.
long week_key(Date date);

/// `count` consecutive Monday-Friday dates starting at the first weekday >= `start`.
std::vector<Date> business_days(Date start, std::size_t count);

/// Index of `date` in a strictly increasing axis, or npos.
std::size_t find_date(const std::vector<Date>& axis, Date date);

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

}  // namespace agal
