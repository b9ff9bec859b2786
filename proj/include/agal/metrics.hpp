#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "agal/common.hpp"
#include "agal/date.hpp"

namespace agal {

struct Concentration {
  double herfindahl = 0.0;
  double n_eff = 0.0;
};

/// H = sum w_i^2 and N_eff = 1 / H.
Concentration herfindahl_neff(const Vector& weights);

/// Number of strictly positive weights.
Index count_positions(const Vector& weights);

/// Weight vectors at successive rebalances on a common asset axis.
struct RebalanceTrail {
  std::vector<Date> dates;
  std::vector<std::string> asset_ids;
  Matrix weights;  ///< N x R, column n holds w*(n)
  /// N x R compounding factors; column n is z_i(n) over (T_{n-1}, T_n]. Column 0 is unused.
  /// Entries may be NaN only where the previous weight is zero.
  Matrix growth;

  Index n_rebalances() const { return weights.cols(); }
  void validate() const;
};

/// Gamma: mean over n >= 1 of sum_i |w*_i(n) - w*_i(n-1)|.
double portfolio_speed(const RebalanceTrail& trail);

enum class CompoundingMean {
  portfolio_weighted,  ///< Z(n) = sum_i z_i(n) w*_i(n-1)
  equal_weight,        ///< Z(n) = mean_i z_i(n)
};

std::string_view to_string(CompoundingMean mode);
CompoundingMean parse_compounding_mean(std::string_view text);

inline constexpr double kRebalancesPerYear = 6.0;

/// Mean over n >= 1 of sum_i |Z(n) w*_i(n) - z_i(n) w*_i(n-1)|, times rebalances per year.
double annualized_turnover(const RebalanceTrail& trail, CompoundingMean mode = CompoundingMean::portfolio_weighted,
                           double rebalances_per_year = kRebalancesPerYear);

enum class ReturnAnnualization { geometric, arithmetic };

struct PerformanceStats {
  double total_return = 0.0;
  double excess_return = 0.0;
  double volatility = 0.0;
  double sharpe = 0.0;
  double rho = kMissing;
  double beta = kMissing;
  double alpha = kMissing;
  Index periods = 0;
};

/// Annualized statistics of a periodic return series (52 periods per year for weekly data).
/// `rf` is either empty (zero), a single constant per-period rate, or aligned with `returns`.
/// `benchmark` may be empty; otherwise rho, beta, alpha are reported against it.
PerformanceStats performance_stats(const Vector& returns, const Vector& rf, const Vector& benchmark,
                                   double periods_per_year = kWeeksPerYear,
                                   ReturnAnnualization annualization = ReturnAnnualization::geometric);

struct MetricsReport {
  std::string method;
  double excess_return = 0.0;
  double total_return = 0.0;
  double volatility = 0.0;
  double sharpe = 0.0;
  double n_positions = 0.0;
  double n_eff = 0.0;
  double turnover = 0.0;
  double rho = kMissing;
  double beta = kMissing;
  double alpha = kMissing;
};

enum class Frequency { weekly, monthly };

std::string_view to_string(Frequency frequency);
Frequency parse_frequency(std::string_view text);

struct PeriodReturns {
  std::vector<Date> dates;  ///< last trading date of each period
  Vector returns;
};

/// Compounds daily returns within calendar weeks (Monday based) or months.
PeriodReturns aggregate_returns(const std::vector<Date>& dates, const Vector& daily_returns, Frequency frequency);

}  // namespace agal
