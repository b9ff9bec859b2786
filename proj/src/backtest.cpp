#include "agal/backtest.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "agal/error.hpp"
#include "agal/parallel.hpp"
#include "agal/random.hpp"

namespace agal {

std::vector<TargetSpec> BacktestConfig::default_methods() {
  return {TargetSpec::named(TargetKind::aap), TargetSpec::sparse_aap(), TargetSpec::named(TargetKind::mdp),
          TargetSpec::named(TargetKind::mvp), TargetSpec::named(TargetKind::equal_weight),
          TargetSpec::named(TargetKind::market_cap)};
}

void BacktestConfig::validate() const {
  if (lookback_days < 2) throw Error(ErrorKind::invalid_input, "lookback_days must be >= 2");
  if (rebalance_months < 1) throw Error(ErrorKind::invalid_input, "rebalance_months must be >= 1");
  if (methods.empty()) throw Error(ErrorKind::invalid_input, "at least one method is required");
  if (!(risk_free_daily > -1.0)) throw Error(ErrorKind::invalid_input, "risk_free_daily must exceed -1");
  for (const auto& m : methods) m.validate();
  optimizer.validate();
  cleaning.validate();
  pool.validate();
}

Vector drift_weights(const Vector& weights, const Vector& growth) {
  if (weights.size() != growth.size()) throw Error(ErrorKind::invalid_input, "weights and growth differ in size");
  if (!(growth.minCoeff() > 0.0)) throw Error(ErrorKind::invalid_input, "compounding factors must be positive");
  const Vector value = weights.cwiseProduct(growth);
  const double total = value.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::invalid_input, "drifted portfolio has no value");
  return value / total;
}

std::vector<std::size_t> month_end_indices(const std::vector<Date>& dates) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < dates.size(); ++t) {
    if (t + 1 < dates.size()) {
      if (month_key(dates[t + 1]) != month_key(dates[t])) out.push_back(t);
      continue;
    }
    // The final date closes its month only if no weekday of that month follows it.
    Date next = dates[t] + std::chrono::days{1};
    while (is_weekend(next)) next += std::chrono::days{1};
    if (month_key(next) != month_key(dates[t])) out.push_back(t);
  }
  return out;
}

std::vector<std::size_t> rebalance_indices(const std::vector<Date>& dates, std::size_t first_allowed,
                                           int every_months) {
  if (every_months < 1) throw Error(ErrorKind::invalid_input, "rebalance interval must be >= 1 month");
  std::vector<std::size_t> out;
  std::size_t counter = 0;
  for (const std::size_t t : month_end_indices(dates)) {
    if (t < first_allowed) continue;
    if (counter % static_cast<std::size_t>(every_months) == 0) out.push_back(t);
    ++counter;
  }
  return out;
}

namespace {

struct MethodState {
  Vector hold;
  double cash = 0.0;
  std::vector<double> daily;
  std::vector<Vector> targets;
  std::vector<Vector> growth;
};

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
  if (const auto* ce = dynamic_cast<const ConvergenceError*>(&e)) {
    throw ConvergenceError(fmt::format("{}: {}", context, ce->what()), ce->residual(), ce->iterations());
  }
  throw Error(e.kind(), fmt::format("{}: {}", context, e.what()));
}

}  // namespace

BacktestReport run_backtest(const ReturnsPanel& returns, const MarketCapPanel& caps, const BacktestConfig& cfg) {
  cfg.validate();
  returns.validate();
  if (caps.asset_ids != returns.asset_ids) {
    throw Error(ErrorKind::invalid_input, "market cap panel assets do not match returns panel");
  }
  if (returns.is_normalized) {
    throw Error(ErrorKind::invalid_input, "backtests need raw returns; normalization happens per window");
  }
  const Index n = returns.n_assets();
  const std::size_t n_dates = returns.dates.size();
  const std::size_t lag = cfg.lag_days;
  const std::size_t lookback = cfg.lookback_days;

  std::size_t first_allowed = lookback + lag;
  if (cfg.start) {
    const auto it = std::lower_bound(returns.dates.begin(), returns.dates.end(), *cfg.start);
    first_allowed = std::max(first_allowed, static_cast<std::size_t>(it - returns.dates.begin()));
  }
  const auto schedule = rebalance_indices(returns.dates, first_allowed, cfg.rebalance_months);
  if (schedule.size() < 2) {
    throw Error(ErrorKind::invalid_window,
                fmt::format("data span of {} days leaves {} rebalance dates after a {}-day lookback and {}-day lag",
                            n_dates, schedule.size(), lookback, lag));
  }

  BacktestReport report;
  report.asset_ids = returns.asset_ids;
  std::vector<TargetSpec> methods = cfg.methods;
  auto mc = std::find_if(methods.begin(), methods.end(),
                         [](const TargetSpec& s) { return s.kind == TargetKind::market_cap; });
  if (mc == methods.end()) {
    methods.push_back(TargetSpec::named(TargetKind::market_cap));
    mc = methods.end() - 1;
  }
  report.benchmark = static_cast<std::size_t>(mc - methods.begin());

  PoolConfig pool_cfg = cfg.pool;
  pool_cfg.coverage_lookback_days = lookback;

  std::vector<MethodState> states(methods.size());
  for (auto& s : states) s.hold = Vector::Zero(n);
  report.methods.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) report.methods[m].spec = methods[m];

  std::vector<Index> pool;
  std::vector<Index> previous_eligible;
  int last_refresh_month = 0;
  Vector period_growth = Vector::Ones(n);
  std::vector<char> converted(static_cast<std::size_t>(n), 0);
  std::vector<Date> daily_dates;

  for (std::size_t r = 0; r < schedule.size(); ++r) {
    const std::size_t t = schedule[r];
    const std::string when = format_date(returns.dates[t]);
    const std::size_t as_of = t - lag - 1;

    RebalanceRecord record;
    record.date = returns.dates[t];
    record.date_index = t;
    if (r == 0 || month_key(returns.dates[t]) - last_refresh_month >= pool_cfg.refresh_months) {
      pool = liquidity_ranked_pool(returns, caps, as_of, pool_cfg);
      last_refresh_month = month_key(returns.dates[t]);
      record.pool_refreshed = true;
    }
    std::vector<Index> eligible;
    for (const Index i : coverage_filter(returns, pool, as_of, pool_cfg)) {
      if (!is_missing(returns.returns(i, static_cast<Index>(as_of)))) eligible.push_back(i);
    }
    if (eligible.size() < pool_cfg.min_pool_size) {
      throw Error(ErrorKind::pool_too_small, fmt::format("rebalance {}: {} eligible assets (need {})", when,
                                                         eligible.size(), pool_cfg.min_pool_size));
    }
    if (eligible.size() > lookback) {
      spdlog::warn("rebalance {}: pool of {} exceeds the {}-day lookback", when, eligible.size(), lookback);
    }

    record.window = Window{t - lag - lookback, t - lag};
    if (!(record.window.end + lag <= t)) throw std::logic_error("covariance window overlaps the lag");
    for (const Index i : eligible) record.pool.push_back(returns.asset_ids[static_cast<std::size_t>(i)]);

    const ReturnsPanel window_returns =
        cross_sectional_normalize(returns.select_assets(eligible).slice_dates(record.window.begin, record.window.end));
    const Window full{0, record.window.length()};
    SpectralCovariance cov;
    try {
      if (cfg.covariance == CovarianceMode::raw) {
        cov = empirical_covariance(window_returns, full);
      } else {
        CleaningConfig cc = cfg.cleaning;
        cc.seed = mix_seed(cfg.cleaning.seed, r);
        cc.jobs = cfg.jobs;
        cov = cross_validated_clean(window_returns, full, cc);
      }
    } catch (const Error& e) {
      rethrow_with_context(e, fmt::format("rebalance {}", when));
    }
    record.covariance_digest = cov.digest();
    const Vector sigma = cov.volatilities();
    const Vector all_caps = caps.caps_as_of(returns.dates[t]);
    Vector pool_caps(static_cast<Index>(eligible.size()));
    for (std::size_t k = 0; k < eligible.size(); ++k) pool_caps(static_cast<Index>(k)) = all_caps(eligible[k]);

    std::vector<Vector> solved(methods.size());
    std::vector<double> residuals(methods.size());
    std::vector<Index> shorts(methods.size());
    parallel_for(methods.size(), cfg.jobs, [&](std::size_t m) {
      try {
        const bool needs_caps = methods[m].kind == TargetKind::market_cap ||
                                (methods[m].kind == TargetKind::continuum && methods[m].c != 0.0);
        const TargetPortfolio target = named_target(methods[m], cov, sigma, needs_caps ? pool_caps : Vector());
        const ConstrainedPortfolio sol = solve_tracking(cov, target, cfg.optimizer);
        solved[m] = sol.weights;
        residuals[m] = sol.kkt_residual;
        shorts[m] = (target.weights.array() < 0.0).count();
      } catch (const Error& e) {
        rethrow_with_context(e, fmt::format("method {} at rebalance {}", methods[m].name(), when));
      }
    });

    // Growth factors over the period just closed, defined on the union of consecutive pools.
    Vector z = Vector::Constant(n, kMissing);
    if (r == 0) {
      z.setOnes();
    } else {
      for (const Index i : previous_eligible) z(i) = period_growth(i);
      for (const Index i : eligible) z(i) = period_growth(i);
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      Vector w = Vector::Zero(n);
      for (std::size_t k = 0; k < eligible.size(); ++k) w(eligible[k]) = solved[m](static_cast<Index>(k));
      states[m].targets.push_back(w);
      states[m].growth.push_back(z);
      states[m].hold = w;
      states[m].cash = 0.0;
      report.methods[m].kkt_residuals.push_back(residuals[m]);
      report.methods[m].target_shorts.push_back(shorts[m]);
    }
    report.rebalances.push_back(std::move(record));
    previous_eligible = eligible;

    // Hold until the next rebalance (or the end of the data).
    period_growth.setOnes();
    std::fill(converted.begin(), converted.end(), 0);
    const std::size_t stop = r + 1 < schedule.size() ? schedule[r + 1] : n_dates - 1;
    const double cash_growth = 1.0 + cfg.risk_free_daily;
    for (std::size_t d = t + 1; d <= stop; ++d) {
      const auto day = returns.returns.col(static_cast<Index>(d));
      for (Index i = 0; i < n; ++i) {
        if (!converted[i] && is_missing(day(i))) {
          converted[i] = 1;
          for (auto& s : states) {
            if (s.hold(i) != 0.0) ++report.delisting_events;
            s.cash += s.hold(i);
            s.hold(i) = 0.0;
          }
        }
        period_growth(i) *= converted[i] ? cash_growth : 1.0 + day(i);
      }
      for (auto& s : states) {
        double value = s.cash * cash_growth;
        for (Index i = 0; i < n; ++i) {
          if (s.hold(i) != 0.0) value += s.hold(i) * (1.0 + day(i));
        }
        s.daily.push_back(value - 1.0);
        for (Index i = 0; i < n; ++i) {
          if (s.hold(i) != 0.0) s.hold(i) *= (1.0 + day(i)) / value;
        }
        s.cash *= cash_growth / value;
        if (std::abs(s.hold.sum() + s.cash - 1.0) > 1e-10) throw std::logic_error("portfolio budget drifted");
      }
      daily_dates.push_back(returns.dates[d]);
    }
  }

  const double per_year = 12.0 / static_cast<double>(cfg.rebalance_months);
  const double periods_per_year = cfg.frequency == Frequency::weekly ? kWeeksPerYear : 12.0;
  const Vector daily_rf = Vector::Constant(static_cast<Index>(daily_dates.size()), cfg.risk_free_daily);
  const PeriodReturns rf_periods = aggregate_returns(daily_dates, daily_rf, cfg.frequency);

  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodResult& res = report.methods[m];
    const auto rebalances = static_cast<Index>(schedule.size());
    res.trail.dates.reserve(schedule.size());
    for (const std::size_t t : schedule) res.trail.dates.push_back(returns.dates[t]);
    res.trail.asset_ids = returns.asset_ids;
    res.trail.weights.resize(n, rebalances);
    res.trail.growth.resize(n, rebalances);
    for (Index k = 0; k < rebalances; ++k) {
      res.trail.weights.col(k) = states[m].targets[static_cast<std::size_t>(k)];
      res.trail.growth.col(k) = states[m].growth[static_cast<std::size_t>(k)];
    }
    res.daily_dates = daily_dates;
    res.daily_returns = Eigen::Map<const Vector>(states[m].daily.data(), static_cast<Index>(states[m].daily.size()));
    res.period_returns = aggregate_returns(daily_dates, res.daily_returns, cfg.frequency);
  }

  const Vector& bench = report.methods[report.benchmark].period_returns.returns;
  for (auto& res : report.methods) {
    const PerformanceStats ps =
        performance_stats(res.period_returns.returns, rf_periods.returns, bench, periods_per_year);
    MetricsReport& mr = res.metrics;
    mr.method = res.spec.name();
    mr.total_return = ps.total_return;
    mr.excess_return = ps.excess_return;
    mr.volatility = ps.volatility;
    mr.sharpe = ps.sharpe;
    mr.rho = ps.rho;
    mr.beta = ps.beta;
    mr.alpha = ps.alpha;
    mr.turnover = annualized_turnover(res.trail, cfg.z_mode, per_year);
    double positions = 0.0;
    double n_eff = 0.0;
    for (Index k = 0; k < res.trail.weights.cols(); ++k) {
      positions += static_cast<double>(count_positions(res.trail.weights.col(k)));
      n_eff += herfindahl_neff(res.trail.weights.col(k)).n_eff;
    }
    mr.n_positions = positions / static_cast<double>(res.trail.weights.cols());
    mr.n_eff = n_eff / static_cast<double>(res.trail.weights.cols());
  }
  return report;
}

}  // namespace agal
