#include <gtest/gtest.h>

#include <random>

#include "agal/error.hpp"
#include "agal/metrics.hpp"
#include "agal/stats.hpp"

using namespace agal;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Index>(v.size()));
  Index k = 0;
  for (double e : v) x(k++) = e;
  return x;
}

RebalanceTrail trail_of(const Matrix& w, const Matrix& z) {
  RebalanceTrail t;
  t.dates = business_days(make_date(2020, 1, 6), static_cast<std::size_t>(w.cols()));
  for (Index i = 0; i < w.rows(); ++i) t.asset_ids.push_back(std::to_string(i));
  t.weights = w;
  t.growth = z;
  return t;
}

}  // namespace

TEST(Stats, MomentsMatchDefinitions) {
  const Vector x = vec({1, 2, 4, 7});
  const Vector y = vec({2, 1, 0, 5});
  EXPECT_DOUBLE_EQ(stats::mean(x), 3.5);
  EXPECT_NEAR(stats::variance(x), (6.25 + 2.25 + 0.25 + 12.25) / 3.0, 1e-14);
  EXPECT_NEAR(stats::covariance(x, y), (-2.5 * 0 + -1.5 * -1 + 0.5 * -2 + 3.5 * 3) / 3.0, 1e-14);
  EXPECT_TRUE(std::isnan(stats::correlation(x, Vector::Constant(4, 1.0))));
}

TEST(Stats, AverageRanksAndSpearman) {
  EXPECT_EQ(stats::average_ranks(vec({3, 1, 3, 2})), vec({3.5, 1, 3.5, 2}));
  EXPECT_NEAR(stats::spearman(vec({1, 2, 3, 4}), vec({10, 9, 3, 1})), -1.0, 1e-15);
  EXPECT_NEAR(stats::spearman(vec({1, 2, 3}), vec({1, 3, 2})), 0.5, 1e-15);
}

TEST(Metrics, Concentration) {
  const auto c = herfindahl_neff(Vector::Constant(8, 0.125));
  EXPECT_NEAR(c.n_eff, 8.0, 1e-12);
  EXPECT_NEAR(herfindahl_neff(vec({0.5, 0.5, 0})).herfindahl, 0.5, 1e-15);
  EXPECT_EQ(count_positions(vec({0.2, 0, 0.8, -0.0})), 2);
}

TEST(Metrics, SpeedIsMeanL1Step) {
  Matrix w(2, 3);
  w << 0.5, 0.7, 0.7,  //
      0.5, 0.3, 0.3;
  EXPECT_NEAR(portfolio_speed(trail_of(w, Matrix::Ones(2, 3))), (0.4 + 0.0) / 2.0, 1e-15);
}

TEST(Metrics, TurnoverOracle) {
  Matrix w(2, 2);
  w << 0.5, 0.5,  //
      0.5, 0.5;
  Matrix z(2, 2);
  z << 1, 1.2,  //
      1, 0.8;
  // Portfolio-weighted Z = 1; traded |0.5 - 0.6| + |0.5 - 0.4| = 0.2 per rebalance.
  EXPECT_NEAR(annualized_turnover(trail_of(w, z), CompoundingMean::portfolio_weighted, 6.0), 1.2, 1e-14);
  EXPECT_NEAR(annualized_turnover(trail_of(w, z), CompoundingMean::equal_weight, 6.0), 1.2, 1e-14);
  // A buy-and-hold trail has zero turnover: weights follow the drift.
  Matrix wh(2, 2);
  wh << 0.5, 0.6,  //
      0.5, 0.4;
  EXPECT_NEAR(annualized_turnover(trail_of(wh, z)), 0.0, 1e-15);
}

TEST(Metrics, BenchmarkAgainstItself) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.001, 0.02);
  for (int trial = 0; trial < 20; ++trial) {
    Vector r(200);
    for (Index t = 0; t < r.size(); ++t) r(t) = normal(rng);
    const auto s = performance_stats(r, Vector(), r);
    EXPECT_NEAR(s.rho, 1.0, 1e-12);
    EXPECT_NEAR(s.beta, 1.0, 1e-12);
    EXPECT_NEAR(s.alpha, 0.0, 1e-12);
  }
}

TEST(Metrics, AnnualizationOracle) {
  const Vector r = vec({0.01, -0.02, 0.03, 0.0, 0.01, -0.02, 0.03, 0.0});
  const auto s = performance_stats(r, Vector(), Vector(), 52.0, ReturnAnnualization::arithmetic);
  EXPECT_NEAR(s.total_return, 52.0 * 0.005, 1e-14);
  EXPECT_NEAR(s.volatility, std::sqrt(52.0 * stats::variance(r)), 1e-14);
  EXPECT_NEAR(s.sharpe, s.excess_return / s.volatility, 1e-14);
  const auto g = performance_stats(r, Vector(), Vector(), 52.0, ReturnAnnualization::geometric);
  const double growth = std::pow(1.01 * 0.98 * 1.03 * 1.0, 2.0);
  EXPECT_NEAR(g.total_return, std::pow(growth, 52.0 / 8.0) - 1.0, 1e-12);
}

TEST(Metrics, WeeklyAggregationCompounds) {
  const auto dates = business_days(make_date(2024, 6, 3), 7);
  const Vector daily = vec({0.01, 0.02, 0, 0, -0.01, 0.05, 0.0});
  const PeriodReturns p = aggregate_returns(dates, daily, Frequency::weekly);
  ASSERT_EQ(p.returns.size(), 2);
  EXPECT_EQ(p.dates[0], make_date(2024, 6, 7));
  EXPECT_NEAR(p.returns(0), 1.01 * 1.02 * 0.99 - 1.0, 1e-15);
  EXPECT_NEAR(p.returns(1), 0.05, 1e-15);
  const PeriodReturns m = aggregate_returns(dates, daily, Frequency::monthly);
  EXPECT_EQ(m.returns.size(), 1);
}
