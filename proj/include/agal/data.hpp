#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agal/common.hpp"
#include "agal/date.hpp"

namespace agal {

/// N x T price levels; rows are assets, columns dates. Missing prices are NaN.
struct PricePanel {
  std::vector<std::string> asset_ids;
  std::vector<Date> dates;
  Matrix prices;

  Index n_assets() const { return prices.rows(); }
  Index n_dates() const { return prices.cols(); }
  void validate() const;
};

/// N x T simple returns. `is_normalized` marks cross-sectionally L2-normalized returns.
struct ReturnsPanel {
  std::vector<std::string> asset_ids;
  std::vector<Date> dates;
  Matrix returns;
  bool is_normalized = false;
  /// Dates whose cross-section was identically zero at normalization time.
  std::vector<Date> degenerate_dates;

  Index n_assets() const { return returns.rows(); }
  Index n_dates() const { return returns.cols(); }
  void validate() const;

  /// Rows restricted to `assets` (indices into this panel), same date axis.
  ReturnsPanel select_assets(const std::vector<Index>& assets) const;
  /// Columns [begin, end).
  ReturnsPanel slice_dates(std::size_t begin, std::size_t end) const;
};

struct MarketCapPanel {
  std::vector<std::string> asset_ids;
  std::vector<Date> dates;
  Matrix caps;

  Index n_assets() const { return caps.rows(); }
  Index n_dates() const { return caps.cols(); }
  void validate() const;

  /// Latest present cap at or before `date` for each asset (NaN if none).
  Vector caps_as_of(Date date) const;
};

struct PoolConfig {
  double min_coverage_fraction = 0.95;
  std::size_t liquidity_window_days = 63;
  std::size_t pool_size = 1000;
  /// Window over which coverage is checked; the covariance lookback.
  std::size_t coverage_lookback_days = 1000;
  /// Pool membership is refreshed every this many months (yearly by default).
  int refresh_months = 12;
  /// Smallest admissible surviving pool.
  std::size_t min_pool_size = 2;

  void validate() const;
};

ReturnsPanel compute_returns(const PricePanel& prices);

/// Divides each date's cross-section by its L2 norm over present entries.
/// All-zero dates stay zero and are recorded in `degenerate_dates`.
ReturnsPanel cross_sectional_normalize(const ReturnsPanel& returns);

/// Liquidity proxy score per asset over the window ending at `as_of_index` (inclusive):
/// mean market cap times mean absolute return. NaN when the asset has no data in the window.
Vector liquidity_scores(const ReturnsPanel& returns, const MarketCapPanel& caps,
                        std::size_t as_of_index, std::size_t window);

/// Top `pool_size` assets by liquidity proxy (ascending index order).
std::vector<Index> liquidity_ranked_pool(const ReturnsPanel& returns, const MarketCapPanel& caps,
                                         std::size_t as_of_index, const PoolConfig& cfg);

/// Members with at least `min_coverage_fraction` present returns over the lookback
/// ending at `as_of_index` (inclusive).
std::vector<Index> coverage_filter(const ReturnsPanel& returns, const std::vector<Index>& members,
                                   std::size_t as_of_index, const PoolConfig& cfg);

/// Two-stage selection (liquidity proxy, then coverage) as of `as_of`; returns asset ids.
std::vector<std::string> apply_pool_filter(const ReturnsPanel& returns, const MarketCapPanel& caps,
                                           const PoolConfig& cfg, Date as_of);

struct SyntheticConfig {
  double market_vol_daily = 0.010;
  double market_drift_annual = 0.06;
  /// Log-dispersion of the per-sector beta level.
  double sector_beta_dispersion = 0.30;
  /// Log-dispersion of each asset's beta around its sector level.
  double beta_dispersion = 0.15;
  double sector_vol_daily = 0.010;
  double idio_vol_median_daily = 0.015;
  double idio_vol_dispersion = 0.45;
  /// Annualized excess drift tilted toward low idiosyncratic-vol names (cash-neutral).
  double low_vol_premium_annual = 0.0;
  double cap_log_sigma = 1.0;
  double cap_log_median = 22.0;
  Date start = make_date(2005, 8, 1);
};

struct SyntheticUniverse {
  PricePanel prices;
  MarketCapPanel caps;
  /// Generative daily return covariance B B' + diag(idio^2).
  Matrix true_covariance;
  Vector true_mean;
  Matrix loadings;
  Vector idio_vol;
  std::vector<int> sector;
};

/// Deterministic factor-model universe: one all-positive market factor,
/// n_factors - 1 sector factors, heterogeneous idiosyncratic vols, log-normal caps.
SyntheticUniverse generate_synthetic_universe(std::size_t n_assets, std::size_t n_days,
                                              std::size_t n_factors, std::uint64_t seed,
                                              const SyntheticConfig& cfg = {});

/// Cap-weighted index daily returns: weights from caps on the previous date.
Vector market_cap_index_returns(const ReturnsPanel& returns, const MarketCapPanel& caps);

}  // namespace agal
