#include "agal/metrics.hpp"

#include <fmt/format.h>

#include "agal/error.hpp"
#include "agal/stats.hpp"

namespace agal {

Concentration herfindahl_neff(const Vector& weights) {
  if (weights.size() == 0 || !weights.allFinite()) throw Error(ErrorKind::invalid_input, "weights must be finite");
  const double h = weights.squaredNorm();
  if (!(h > 0.0)) throw Error(ErrorKind::invalid_input, "Herfindahl index of a zero vector");
  return {h, 1.0 / h};
}

Index count_positions(const Vector& weights) { return (weights.array() > 0.0).count(); }

void RebalanceTrail::validate() const {
  const auto r = static_cast<std::size_t>(weights.cols());
  if (dates.size() != r) throw Error(ErrorKind::invalid_input, "trail dates and weight columns differ");
  if (growth.rows() != weights.rows() || growth.cols() != weights.cols()) {
    throw Error(ErrorKind::invalid_input, "trail growth factors must match the weight matrix shape");
  }
  if (!asset_ids.empty() && static_cast<Index>(asset_ids.size()) != weights.rows()) {
    throw Error(ErrorKind::invalid_input, "trail asset ids do not match weight rows");
  }
  for (std::size_t k = 1; k < dates.size(); ++k) {
    if (!(dates[k - 1] < dates[k])) throw Error(ErrorKind::invalid_input, "trail dates must increase");
  }
}

double portfolio_speed(const RebalanceTrail& trail) {
  const Index r = trail.weights.cols();
  if (r < 2) throw Error(ErrorKind::invalid_input, "speed needs at least two rebalances");
  double total = 0.0;
  for (Index n = 1; n < r; ++n) total += (trail.weights.col(n) - trail.weights.col(n - 1)).cwiseAbs().sum();
  return total / static_cast<double>(r - 1);
}

std::string_view to_string(CompoundingMean mode) {
  return mode == CompoundingMean::equal_weight ? "equal_weight" : "portfolio_weighted";
}

CompoundingMean parse_compounding_mean(std::string_view text) {
  if (text == "portfolio_weighted" || text == "portfolio") return CompoundingMean::portfolio_weighted;
  if (text == "equal_weight" || text == "equal") return CompoundingMean::equal_weight;
  throw Error(ErrorKind::invalid_input, fmt::format("unknown compounding mean '{}'", text));
}

double annualized_turnover(const RebalanceTrail& trail, CompoundingMean mode, double rebalances_per_year) {
  trail.validate();
  const Index r = trail.weights.cols();
  const Index n_assets = trail.weights.rows();
  if (r < 2) throw Error(ErrorKind::invalid_input, "turnover needs at least two rebalances");
  double total = 0.0;
  for (Index n = 1; n < r; ++n) {
    const auto prev = trail.weights.col(n - 1);
    const auto next = trail.weights.col(n);
    const auto z = trail.growth.col(n);
    double big_z = 0.0;
    Index counted = 0;
    for (Index i = 0; i < n_assets; ++i) {
      if (is_missing(z(i)) || !(z(i) > 0.0)) {
        if (prev(i) != 0.0) {
          throw Error(ErrorKind::invalid_input,
                      fmt::format("missing compounding factor for a held asset at rebalance {}", n));
        }
        continue;
      }
      if (mode == CompoundingMean::portfolio_weighted) {
        big_z += z(i) * prev(i);
      } else {
        big_z += z(i);
        ++counted;
      }
    }
    if (mode == CompoundingMean::equal_weight) {
      if (counted == 0) throw Error(ErrorKind::invalid_input, "no compounding factors at rebalance");
      big_z /= static_cast<double>(counted);
    }
    double cost = 0.0;
    for (Index i = 0; i < n_assets; ++i) {
      const double drifted = prev(i) != 0.0 ? z(i) * prev(i) : 0.0;
      cost += std::abs(big_z * next(i) - drifted);
    }
    total += cost;
  }
  return total / static_cast<double>(r - 1) * rebalances_per_year;
}

PerformanceStats performance_stats(const Vector& returns, const Vector& rf, const Vector& benchmark,
                                   double periods_per_year, ReturnAnnualization annualization) {
  const Index n = returns.size();
  if (n < 8) throw Error(ErrorKind::invalid_input, "performance statistics need at least 8 periods");
  if (!returns.allFinite()) throw Error(ErrorKind::invalid_input, "returns must be finite");
  Vector rate = Vector::Zero(n);
  if (rf.size() == 1) rate.setConstant(rf(0));
  else if (rf.size() == n) rate = rf;
  else if (rf.size() != 0) throw Error(ErrorKind::invalid_input, "risk-free series is misaligned");

  const auto annualize = [&](const Vector& x) {
    if (annualization == ReturnAnnualization::arithmetic) return x.mean() * periods_per_year;
    double log_growth = 0.0;
    for (Index i = 0; i < x.size(); ++i) log_growth += std::log1p(x(i));
    return std::expm1(log_growth * periods_per_year / static_cast<double>(x.size()));
  };

  PerformanceStats s;
  s.periods = n;
  s.total_return = annualize(returns);
  s.excess_return = s.total_return - annualize(rate);
  s.volatility = std::sqrt(stats::variance(returns) * periods_per_year);
  s.sharpe = s.volatility > 0.0 ? s.excess_return / s.volatility : std::numeric_limits<double>::quiet_NaN();
  if (benchmark.size() != 0) {
    if (benchmark.size() != n) throw Error(ErrorKind::invalid_input, "benchmark series is misaligned");
    const double vb = stats::variance(benchmark);
    if (!(vb > 0.0)) throw Error(ErrorKind::beta_undefined, "benchmark has zero variance");
    s.rho = stats::correlation(returns, benchmark);
    s.beta = stats::covariance(returns, benchmark) / vb;
    const Vector residual = (returns - rate) - s.beta * (benchmark - rate);
    s.alpha = residual.mean() * periods_per_year;
  }
  return s;
}

std::string_view to_string(Frequency frequency) { return frequency == Frequency::monthly ? "monthly" : "weekly"; }

Frequency parse_frequency(std::string_view text) {
  if (text == "weekly") return Frequency::weekly;
  if (text == "monthly") return Frequency::monthly;
  throw Error(ErrorKind::invalid_input, fmt::format("unknown frequency '{}'", text));
}

PeriodReturns aggregate_returns(const std::vector<Date>& dates, const Vector& daily_returns, Frequency frequency) {
  if (static_cast<Index>(dates.size()) != daily_returns.size()) {
    throw Error(ErrorKind::invalid_input, "dates and returns differ in length");
  }
  PeriodReturns out;
  std::vector<double> values;
  const auto key = [&](Date d) -> long {
    return frequency == Frequency::weekly ? week_key(d) : static_cast<long>(month_key(d));
  };
  double growth = 1.0;
  for (std::size_t t = 0; t < dates.size(); ++t) {
    growth *= 1.0 + daily_returns(static_cast<Index>(t));
    const bool last = t + 1 == dates.size() || key(dates[t + 1]) != key(dates[t]);
    if (last) {
      out.dates.push_back(dates[t]);
      values.push_back(growth - 1.0);
      growth = 1.0;
    }
  }
  out.returns = stats::to_vector(values);
  return out;
}

}  // namespace agal
