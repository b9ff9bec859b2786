#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "agal/common.hpp"
#include "agal/data.hpp"
#include "agal/date.hpp"

namespace agal {

struct FactorConfig {
  std::size_t vol_window = 100;
  std::size_t return_horizon = 3;
  std::size_t signal_lag = 20;
  std::size_t hedge_beta_window = 100;
  std::size_t hedge_lag = 2;
  double vol_target = 0.10;
  std::size_t vol_estimate_window = 100;
  std::size_t vol_estimate_lag = 1;
  int jobs = 1;

  void validate() const;
};

enum class FactorKind { low_vol, low_beta };

std::string_view to_string(FactorKind kind);
FactorKind parse_factor_kind(std::string_view text);

struct FactorSeries {
  FactorKind kind = FactorKind::low_vol;
  std::vector<Date> dates;
  Matrix signals;         ///< N x T, zero where an asset is not ranked
  Vector raw_returns;     ///< sum_i s_i r_i
  Vector hedge_beta;      ///< lagged rolling beta of the raw factor to MC
  Vector hedged_returns;  ///< raw minus beta times MC
  Vector realized_vol;    ///< lagged rolling daily vol used for scaling
  Vector returns;         ///< final vol-targeted series, NaN before `first_valid`
  std::size_t first_valid = 0;
};

/// (2/N) rank(score) - 1 with average ranks for ties, then demeaned so the entries sum to zero.
Vector rank_signal(const Vector& scores);

/// Overlapping h-day sums; NaN where any constituent is missing or history is too short.
Matrix rolling_sums(const Matrix& series, std::size_t horizon);

/// beta(t) = cov(y, x) / var(x) over the `window` observations ending at t - lag (inclusive).
/// NaN where the window is incomplete or not yet available.
Vector rolling_beta(const Vector& y, const Vector& x, std::size_t window, std::size_t lag);

/// Cash-neutral low-risk factor, beta-hedged against `benchmark_mc` and scaled to the vol target.
FactorSeries build_low_risk_factor(const ReturnsPanel& returns, const Vector& benchmark_mc, FactorKind kind,
                                   const FactorConfig& cfg = {});

struct MethodSeries {
  std::string name;
  std::vector<Date> dates;
  Vector returns;
};

struct ExposureRow {
  std::string method;
  double rho_low_vol = 0.0;
  double rho_star_low_vol = 0.0;
  double rho_low_beta = 0.0;
  double rho_star_low_beta = 0.0;
  /// The residual over MC vanished; both rho* values are reported as 0.
  bool residual_degenerate = false;
};

/// Correlations of each method (rho) and of its residual over MC (rho*) with the two factors.
/// Methods share the MC date axis; factor values are matched by date.
std::vector<ExposureRow> exposure_table(const std::vector<MethodSeries>& methods, const MethodSeries& mc,
                                        const FactorSeries& low_vol, const FactorSeries& low_beta,
                                        const FactorConfig& cfg = {});

}  // namespace agal
