#include <gtest/gtest.h>

#include <random>

#include "agal/error.hpp"
#include "agal/factors.hpp"
#include "agal/stats.hpp"

using namespace agal;

TEST(Factors, RankSignalIsCashNeutral) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial;
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = trial % 3 == 0 ? std::round(normal(rng)) : normal(rng);
    const Vector s = rank_signal(x);
    EXPECT_NEAR(s.sum(), 0.0, 1e-12);
    EXPECT_LE(s.cwiseAbs().maxCoeff(), 1.0);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (x(i) < x(j)) EXPECT_LT(s(i), s(j));
        if (x(i) == x(j)) EXPECT_EQ(s(i), s(j));
      }
    }
  }
  Vector x(4);
  x << 3, 1, 4, 2;
  Vector expected(4);
  expected << 0.25, -0.75, 0.75, -0.25;
  EXPECT_TRUE(rank_signal(x).isApprox(expected, 1e-15));
}

TEST(Factors, RollingSums) {
  Matrix m(1, 5);
  m << 1, 2, kMissing, 4, 5;
  const Matrix s = rolling_sums(m, 2);
  EXPECT_TRUE(is_missing(s(0, 0)));
  EXPECT_EQ(s(0, 1), 3.0);
  EXPECT_TRUE(is_missing(s(0, 2)));
  EXPECT_TRUE(is_missing(s(0, 3)));
  EXPECT_EQ(s(0, 4), 9.0);
}

TEST(Factors, RollingBetaOracle) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  Vector x(60);
  Vector y(60);
  for (Index t = 0; t < 60; ++t) {
    x(t) = normal(rng);
    y(t) = 0.7 * x(t) + 0.1 * normal(rng);
  }
  const Vector b = rolling_beta(y, x, 20, 2);
  for (Index t = 0; t < 21; ++t) EXPECT_TRUE(is_missing(b(t)));
  for (Index t = 21; t < 60; ++t) {
    const Index begin = t - 2 - 19;
    const Vector xs = x.segment(begin, 20);
    const Vector ys = y.segment(begin, 20);
    EXPECT_NEAR(b(t), stats::covariance(ys, xs) / stats::variance(xs), 1e-12);
  }
}

TEST(Factors, LowRiskFactorContract) {
  const auto u = generate_synthetic_universe(60, 900, 4, 41);
  const ReturnsPanel r = compute_returns(u.prices);
  const Vector mc = market_cap_index_returns(r, u.caps);
  FactorConfig cfg;
  for (auto kind : {FactorKind::low_vol, FactorKind::low_beta}) {
    const FactorSeries f = build_low_risk_factor(r, mc, kind, cfg);
    EXPECT_EQ(f.first_valid, 322u);
    for (Index t = 0; t < f.signals.cols(); ++t) EXPECT_NEAR(f.signals.col(t).sum(), 0.0, 1e-12);
    for (std::size_t t = 0; t < f.first_valid; ++t) EXPECT_TRUE(is_missing(f.returns(static_cast<Index>(t))));
    for (Index t = static_cast<Index>(f.first_valid); t < f.returns.size(); ++t) {
      EXPECT_TRUE(std::isfinite(f.returns(t)));
    }
  }
  // Low-vol longs the assets with the smallest idiosyncratic risk on average.
  const FactorSeries lv = build_low_risk_factor(r, mc, FactorKind::low_vol, cfg);
  const Vector mean_signal = lv.signals.rowwise().mean();
  EXPECT_LT(stats::spearman(mean_signal, u.idio_vol), -0.5);
}

TEST(Factors, CoverageError) {
  const auto u = generate_synthetic_universe(10, 200, 2, 1);
  const ReturnsPanel r = compute_returns(u.prices);
  try {
    build_low_risk_factor(r, market_cap_index_returns(r, u.caps), FactorKind::low_vol);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::coverage);
  }
}

TEST(Factors, ExposureOfTheFactorItself) {
  const auto u = generate_synthetic_universe(60, 900, 4, 42);
  const ReturnsPanel r = compute_returns(u.prices);
  const Vector mcr = market_cap_index_returns(r, u.caps);
  const FactorSeries lv = build_low_risk_factor(r, mcr, FactorKind::low_vol);
  const FactorSeries lb = build_low_risk_factor(r, mcr, FactorKind::low_beta);
  const MethodSeries mc{"MC", r.dates, mcr};
  Vector y = lv.returns;
  for (Index t = 0; t < y.size(); ++t) {
    if (is_missing(y(t))) y(t) = 0.0;
  }
  y += mcr;
  const auto rows = exposure_table({MethodSeries{"X", r.dates, y}, mc}, mc, lv, lb);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_GT(rows[0].rho_star_low_vol, 0.9);
  EXPECT_TRUE(rows[1].residual_degenerate);
  EXPECT_EQ(rows[1].rho_star_low_vol, 0.0);
  EXPECT_THROW(exposure_table({MethodSeries{"short", {r.dates[0]}, Vector::Zero(1)}}, mc, lv, lb), Error);
}
