#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agal/data.hpp"
#include "agal/metrics.hpp"
#include "agal/optimizer.hpp"
#include "agal/spectrum.hpp"
#include "agal/targets.hpp"

namespace agal {

enum class CovarianceMode { raw, cross_validated };

struct BacktestConfig {
  std::size_t lookback_days = 1000;
  std::size_t lag_days = 2;
  /// Rebalance on every this-many-th month-end.
  int rebalance_months = 2;
  std::vector<TargetSpec> methods = default_methods();
  OptimizerConfig optimizer;
  CovarianceMode covariance = CovarianceMode::cross_validated;
  CleaningConfig cleaning;
  PoolConfig pool;
  Frequency frequency = Frequency::weekly;
  CompoundingMean z_mode = CompoundingMean::portfolio_weighted;
  /// Per-day rate earned by cash.
  double risk_free_daily = 0.0;
  /// First admissible rebalance date; defaults to the first date with a full lookback.
  std::optional<Date> start;
  int jobs = 1;

  static std::vector<TargetSpec> default_methods();
  void validate() const;
};

/// Per-rebalance audit record shared by all methods.
struct RebalanceRecord {
  Date date;
  std::size_t date_index = 0;
  Window window;  ///< covariance window on the returns axis, [begin, end)
  std::vector<std::string> pool;
  std::uint64_t covariance_digest = 0;
  bool pool_refreshed = false;
};

struct MethodResult {
  TargetSpec spec;
  RebalanceTrail trail;
  std::vector<Date> daily_dates;
  Vector daily_returns;
  PeriodReturns period_returns;
  MetricsReport metrics;
  std::vector<double> kkt_residuals;
  std::vector<Index> target_shorts;
};

struct BacktestReport {
  std::vector<std::string> asset_ids;
  std::vector<RebalanceRecord> rebalances;
  std::vector<MethodResult> methods;
  std::size_t benchmark = 0;  ///< index of the MC method in `methods`
  /// Rebalances (after the first) where the benchmark needed cash because a holding delisted.
  std::size_t delisting_events = 0;
};

/// w_i z_i / sum_j w_j z_j.
Vector drift_weights(const Vector& weights, const Vector& growth);

/// Last trading date of each calendar month. The final month counts only when the
/// axis reaches its last weekday.
std::vector<std::size_t> month_end_indices(const std::vector<Date>& dates);

/// Every `every_months`-th month-end at or after `first_allowed`, counted from the first one.
std::vector<std::size_t> rebalance_indices(const std::vector<Date>& dates, std::size_t first_allowed,
                                           int every_months);

BacktestReport run_backtest(const ReturnsPanel& returns, const MarketCapPanel& caps, const BacktestConfig& cfg);

}  // namespace agal
