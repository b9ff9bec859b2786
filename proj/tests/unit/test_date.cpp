#include <gtest/gtest.h>

#include <random>

#include "agal/date.hpp"
#include "agal/error.hpp"

using namespace agal;

TEST(Date, ParseFormatRoundTrip) {
  EXPECT_EQ(format_date(parse_date("2005-08-01")), "2005-08-01");
  EXPECT_EQ(parse_date("2000-02-29"), make_date(2000, 2, 29));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> day(0, 40000);
  for (int k = 0; k < 500; ++k) {
    const Date d = make_date(1950, 1, 1) + std::chrono::days(day(rng));
    EXPECT_EQ(parse_date(format_date(d)), d);
  }
}

TEST(Date, RejectsMalformedText) {
  for (const char* bad : {"", "2005-13-01", "2005-02-30", "05-08-01", "2005/08/01", "2005-08-01x"}) {
    EXPECT_THROW(parse_date(bad), Error) << bad;
  }
}

TEST(Date, Weekends) {
  EXPECT_TRUE(is_weekend(make_date(2024, 6, 1)));
  EXPECT_TRUE(is_weekend(make_date(2024, 6, 2)));
  EXPECT_FALSE(is_weekend(make_date(2024, 6, 3)));
}

TEST(Date, BusinessDaysSkipWeekends) {
  const auto days = business_days(make_date(2024, 6, 1), 10);
  ASSERT_EQ(days.size(), 10u);
  EXPECT_EQ(days.front(), make_date(2024, 6, 3));
  for (std::size_t k = 0; k < days.size(); ++k) {
    EXPECT_FALSE(is_weekend(days[k]));
    if (k > 0) EXPECT_LT(days[k - 1], days[k]);
  }
  EXPECT_EQ(days[5], make_date(2024, 6, 10));
}

TEST(Date, CalendarKeys) {
  EXPECT_EQ(month_key(make_date(2024, 1, 31)), month_key(make_date(2024, 1, 1)));
  EXPECT_EQ(month_key(make_date(2024, 2, 1)), month_key(make_date(2024, 1, 1)) + 1);
  EXPECT_EQ(month_key(make_date(2025, 1, 1)), month_key(make_date(2024, 12, 1)) + 1);
  // 2024-06-03 is a Monday.
  EXPECT_EQ(week_key(make_date(2024, 6, 3)), week_key(make_date(2024, 6, 9)));
  EXPECT_EQ(week_key(make_date(2024, 6, 10)), week_key(make_date(2024, 6, 3)) + 1);
}

TEST(Date, FindDate) {
  const auto days = business_days(make_date(2024, 6, 3), 5);
  EXPECT_EQ(find_date(days, make_date(2024, 6, 5)), 2u);
  EXPECT_EQ(find_date(days, make_date(2024, 6, 8)), npos);
}
