#include <gtest/gtest.h>

#include "agal/error.hpp"
#include "agal/explore.hpp"

using namespace agal;

namespace {

struct Fixture {
  ReturnsPanel returns;
  Vector mc;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto u = generate_synthetic_universe(60, 400, 4, 31);
    const ReturnsPanel r = compute_returns(u.prices);
    return Fixture{r, market_cap_index_returns(r, u.caps)};
  }();
  return f;
}

ExploreConfig small_config() {
  ExploreConfig cfg;
  cfg.n_boot = 2;
  cfg.sample_size = 30;
  cfg.a_grid = {0.0, 0.5, 1.0};
  cfg.cleaning.n_folds = 4;
  cfg.seed = 5;
  cfg.projection_n_boot = 3;
  cfg.projection_sample_size = 40;
  return cfg;
}

}  // namespace

TEST(Explore, CrossingOfTheOneSigmaBand) {
  const Index n = 100;
  const double band = (1.0 + std::sqrt(2.0)) / n;
  Vector p = Vector::Constant(10, 0.5 * band);
  p(0) = 0.0;
  EXPECT_EQ(projection_crossing(p, n), 1);
  p(3) = band;
  EXPECT_EQ(projection_crossing(p, n), 4);
  p(7) = 2.0 * band;
  EXPECT_EQ(projection_crossing(p, n), 8);
}

TEST(Explore, SweepEndpoints) {
  const auto cfg = small_config();
  const SweepTable t = sweep_a(fixture().returns, fixture().mc, cfg);
  EXPECT_EQ(t.rows.size(), 2 * cfg.a_grid.size());
  EXPECT_GE(t.n_rebalances, 2u);
  for (auto mode : {CovarianceMode::raw, CovarianceMode::cross_validated}) {
    const auto s = t.series(mode);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_NEAR(s[0].n_eff, 30.0, 1e-9);
    EXPECT_EQ(s[0].short_count, 0.0);
    EXPECT_NEAR(s[0].gamma, 0.0, 1e-15);
    EXPECT_GT(s[2].gamma, s[0].gamma);
    EXPECT_LT(s[2].n_eff, s[0].n_eff);
    EXPECT_GT(s[2].short_count, 0.0);
  }
}

TEST(Explore, SweepIsDeterministicAcrossWorkers) {
  auto cfg = small_config();
  const SweepTable a = sweep_a(fixture().returns, fixture().mc, cfg);
  cfg.jobs = 4;
  const SweepTable b = sweep_a(fixture().returns, fixture().mc, cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].volatility, b.rows[k].volatility);
    EXPECT_EQ(a.rows[k].gamma, b.rows[k].gamma);
  }
}

TEST(Explore, ProjectionStudyShape) {
  const auto cfg = small_config();
  const ProjectionTable p = projection_study(fixture().returns, cfg);
  EXPECT_EQ(p.n, 40);
  ASSERT_EQ(p.rows.size(), 40u);
  EXPECT_EQ(p.samples_used, 3u);
  EXPECT_NEAR(p.random_level, 1.0 / 40.0, 1e-15);
  double total = 0.0;
  for (const auto& r : p.rows) total += r.mean_p_res;
  EXPECT_NEAR(total, 1.0, 1e-10);
  EXPECT_EQ(p.rows[0].mean_p_res, 0.0);
  EXPECT_GE(p.k_star, 1);
}

TEST(Explore, RejectsOversizedSamples) {
  auto cfg = small_config();
  cfg.sample_size = 100;
  EXPECT_THROW(sweep_a(fixture().returns, fixture().mc, cfg), Error);
}
