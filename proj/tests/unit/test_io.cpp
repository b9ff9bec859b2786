#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "agal/error.hpp"
#include "agal/io.hpp"
#include "test_support.hpp"

using namespace agal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("agal_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Io, NumbersRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> exponent(-300, 300);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 2000; ++k) {
    const double x = normal(rng) * std::pow(10.0, exponent(rng));
    EXPECT_EQ(io::parse_number(io::format_number(x)), x);
  }
  EXPECT_EQ(io::format_number(kMissing), "");
  EXPECT_TRUE(std::isnan(io::parse_number("")));
  EXPECT_TRUE(std::isnan(io::parse_number("NaN")));
  EXPECT_THROW(io::parse_number("1.5x"), Error);
}

TEST(Io, PriceFilesRoundTrip) {
  const fs::path dir = scratch("prices");
  auto u = generate_synthetic_universe(6, 30, 2, 3);
  u.prices.prices(2, 5) = kMissing;
  io::write_text(dir / "p.csv", io::prices_long_csv(u.prices, &u.caps));
  const io::MarketData md = io::read_market_data(dir / "p.csv");
  EXPECT_EQ(md.prices.asset_ids, u.prices.asset_ids);
  EXPECT_EQ(md.prices.dates, u.prices.dates);
  ASSERT_TRUE(md.caps.has_value());
  for (Index i = 0; i < 6; ++i) {
    for (Index t = 0; t < 30; ++t) {
      if (i == 2 && t == 5) {
        EXPECT_TRUE(is_missing(md.prices.prices(i, t)));
      } else {
        EXPECT_EQ(md.prices.prices(i, t), u.prices.prices(i, t));
      }
    }
  }

  const ReturnsPanel r = compute_returns(u.prices);
  io::write_text(dir / "r.csv", io::returns_wide_csv(r));
  const io::ReturnsData back = io::read_returns(dir / "r.csv");
  EXPECT_EQ(back.returns.asset_ids, r.asset_ids);
  EXPECT_TRUE(((back.returns.returns.array() == r.returns.array()) ||
               (back.returns.returns.array().isNaN() && r.returns.array().isNaN())).all());
  EXPECT_FALSE(back.caps.has_value());
  EXPECT_TRUE(io::read_returns(dir / "p.csv").caps.has_value());
}

TEST(Io, RejectsMalformedPrices) {
  const fs::path dir = scratch("bad");
  io::write_text(dir / "dup.csv", "date,asset_id,price\n2020-01-06,A,1\n2020-01-06,A,2\n");
  EXPECT_THROW(io::read_market_data(dir / "dup.csv"), Error);
  io::write_text(dir / "neg.csv", "date,A,B\n2020-01-06,1,-2\n");
  EXPECT_THROW(io::read_market_data(dir / "neg.csv"), Error);
  io::write_text(dir / "date.csv", "date,A\n2020-13-06,1\n");
  EXPECT_THROW(io::read_market_data(dir / "date.csv"), Error);
  EXPECT_THROW(io::read_market_data(dir / "missing.csv"), Error);
}

TEST(Io, CovarianceAndTargetRoundTrip) {
  const fs::path dir = scratch("cov");
  std::mt19937_64 rng(2);
  const auto cov = SpectralCovariance::from_matrix(agal::testing::random_spd(5, rng), CleaningTag::cross_validated);
  const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  io::write_text(dir / "c.json", io::covariance_json(cov, ids, io::Json::object()).dump());
  const io::CovarianceFile cf = io::read_covariance(dir / "c.json");
  EXPECT_EQ(cf.asset_ids, ids);
  EXPECT_EQ(cf.cov.matrix(), cov.matrix());
  EXPECT_EQ(cf.cov.cleaning_tag(), CleaningTag::cross_validated);

  const TargetPortfolio t = named_target(TargetSpec::named(TargetKind::mvp), cov, cov.volatilities(), Vector());
  io::write_text(dir / "t.json", io::target_json(t, ids).dump());
  const io::TargetFile tf = io::read_target(dir / "t.json");
  EXPECT_EQ(tf.weights, t.weights);
  EXPECT_EQ(tf.asset_ids, ids);
  EXPECT_EQ(tf.spec, "MVP");
}

TEST(Io, ConfigSubset) {
  const auto v = io::parse_config(
      "# comment\n"
      "name = \"x # y\"\n"
      "list = [\"a\", \"b\"]  # trailing\n"
      "[sec]\n"
      "n = 3\n");
  EXPECT_EQ(v.at("name"), io::ConfigValue{"x # y"});
  EXPECT_EQ(v.at("list"), (io::ConfigValue{"a", "b"}));
  EXPECT_EQ(v.at("sec.n"), io::ConfigValue{"3"});
  EXPECT_THROW(io::parse_config("a = 1\na = 2\n"), Error);
  EXPECT_THROW(io::parse_config("[oops\n"), Error);
  EXPECT_THROW(io::parse_config("novalue\n"), Error);
}

TEST(Io, BacktestJobFromConfig) {
  const auto job = io::backtest_job_from_config(
      "prices = \"data/p.csv\"\n"
      "lookback_days = 500\n"
      "methods = [\"MC\", \"MVP\", \"S-AAP\"]\n"
      "covariance = \"raw\"\n"
      "k_star_fraction = 0.1\n"
      "[optimizer]\n"
      "position_cap = 0.05\n"
      "[cleaning]\n"
      "folds = 10\n"
      "[pool]\n"
      "pool_size = 300\n",
      "/base");
  EXPECT_EQ(job.prices, fs::path("/base/data/p.csv"));
  EXPECT_EQ(job.config.lookback_days, 500u);
  ASSERT_EQ(job.config.methods.size(), 3u);
  EXPECT_DOUBLE_EQ(job.config.methods[2].k_star_fraction, 0.1);
  EXPECT_EQ(job.config.covariance, CovarianceMode::raw);
  EXPECT_DOUBLE_EQ(job.config.optimizer.position_cap, 0.05);
  EXPECT_EQ(job.config.cleaning.n_folds, 10);
  EXPECT_EQ(job.config.pool.pool_size, 300u);
  EXPECT_THROW(io::backtest_job_from_config("prices = \"p\"\nlookbak_days = 3\n", "."), Error);
  EXPECT_THROW(io::backtest_job_from_config("lookback_days = 3\n", "."), Error);
  EXPECT_THROW(io::backtest_job_from_config("prices = \"p\"\n[optimizer]\nposition_cap = 2\n", "."), Error);
}
