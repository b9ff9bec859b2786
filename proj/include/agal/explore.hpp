#pragma once

#include <cstdint>
#include <vector>

#include "agal/backtest.hpp"
#include "agal/common.hpp"
#include "agal/data.hpp"
#include "agal/optimizer.hpp"
#include "agal/spectrum.hpp"

namespace agal {

struct ExploreConfig {
  std::size_t n_boot = 10;
  std::size_t sample_size = 250;
  std::vector<double> a_grid = default_a_grid();
  /// Covariance window; 0 means 2 * sample_size.
  std::size_t window_days = 0;
  std::size_t lag_days = 2;
  int rebalance_months = 2;
  /// Position cap of the long-only solve; 1 leaves only the long-only constraint.
  OptimizerConfig optimizer = unconstrained_cap();
  CleaningConfig cleaning;
  std::uint64_t seed = 0;
  int jobs = 1;

  std::size_t projection_n_boot = 20;
  std::size_t projection_sample_size = 500;
  /// Trailing window of the projection study; 0 uses the whole history.
  std::size_t projection_window_days = 0;

  std::size_t window() const { return window_days == 0 ? 2 * sample_size : window_days; }
  static std::vector<double> default_a_grid();
  static OptimizerConfig unconstrained_cap();
  void validate() const;
};

/// Bootstrap-averaged statistics at one grid point.
struct SweepRow {
  CovarianceMode covariance = CovarianceMode::raw;
  double a = 0.0;
  double volatility = 0.0;  ///< annualized, daily returns
  double beta = 0.0;
  double correlation = 0.0;
  double short_count = 0.0;  ///< negative entries of the target, per rebalance
  double n_eff = 0.0;
  double n_positions = 0.0;
  double gamma = 0.0;        ///< mean L1 distance between consecutive solved portfolios
  double gamma_drift = 0.0;  ///< same distance measured from the drifted previous portfolio
};

struct SweepTable {
  std::vector<SweepRow> rows;  ///< raw rows first, then cross-validated, each in grid order
  std::size_t n_boot = 0;
  std::size_t sample_size = 0;
  std::size_t n_rebalances = 0;

  /// Rows of one covariance mode in grid order.
  std::vector<SweepRow> series(CovarianceMode mode) const;
};

/// Bootstrap study of the continuum (a, 0, 0). `benchmark` holds daily market-cap index
/// returns on the same date axis as `returns`.
SweepTable sweep_a(const ReturnsPanel& returns, const Vector& benchmark, const ExploreConfig& cfg);

struct ProjectionRow {
  Index k = 0;  ///< 1-based mode rank
  double mean_lambda = 0.0;
  double mean_log_lambda = 0.0;
  double mean_p_res = 0.0;
  double mean_log_p_res = 0.0;  ///< NaN for the top mode
};

struct ProjectionTable {
  std::vector<ProjectionRow> rows;
  Index n = 0;
  double random_level = 0.0;     ///< 1/N
  double one_sigma_level = 0.0;  ///< (1 + sqrt 2)/N
  Index k_star = 0;
  std::size_t samples_used = 0;
  std::size_t samples_skipped = 0;
};

/// Last 1-based rank k >= 2 whose averaged projection reaches (1 + sqrt 2)/N; 1 if none.
Index projection_crossing(const Vector& mean_p_res, Index n);

/// Residual projections of the uniform predictor onto the eigenmodes, averaged over samples.
ProjectionTable projection_study(const ReturnsPanel& returns, const ExploreConfig& cfg);

/// Rows with no missing return over the date axis.
std::vector<Index> complete_history_assets(const ReturnsPanel& returns);

}  // namespace agal
