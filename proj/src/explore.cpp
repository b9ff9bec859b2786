#include "agal/explore.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "agal/error.hpp"
#include "agal/metrics.hpp"
#include "agal/parallel.hpp"
#include "agal/random.hpp"
#include "agal/stats.hpp"
#include "agal/targets.hpp"

namespace agal {

namespace {

// Independent random streams derived from the run seed.
constexpr std::uint64_t kSweepStream = 1;
constexpr std::uint64_t kCleaningStream = 2;
constexpr std::uint64_t kProjectionStream = 3;

constexpr std::array<CovarianceMode, 2> kModes{CovarianceMode::raw, CovarianceMode::cross_validated};

struct Cell {
  // [mode][grid point]
  std::array<std::vector<Vector>, 2> weights;
  std::array<std::vector<Index>, 2> shorts;
};

struct Holding {
  Vector daily;
  std::vector<Vector> drifted;  ///< previous portfolio drifted to each rebalance, entry 0 unused
};

Holding hold_between_rebalances(const Matrix& sample_returns, const std::vector<std::size_t>& schedule,
                                const std::vector<Vector>& weights) {
  const std::size_t last = static_cast<std::size_t>(sample_returns.cols()) - 1;
  Holding h;
  h.daily.resize(static_cast<Index>(last - schedule.front()));
  h.drifted.resize(schedule.size());
  Index day = 0;
  for (std::size_t r = 0; r < schedule.size(); ++r) {
    Vector hold = weights[r];
    const std::size_t stop = r + 1 < schedule.size() ? schedule[r + 1] : last;
    for (std::size_t d = schedule[r] + 1; d <= stop; ++d) {
      const Vector gross = sample_returns.col(static_cast<Index>(d)).array() + 1.0;
      const double value = hold.dot(gross);
      h.daily(day++) = value - 1.0;
      hold = hold.cwiseProduct(gross) / value;
    }
    if (r + 1 < schedule.size()) h.drifted[r + 1] = hold;
  }
  return h;
}

}  // namespace

std::vector<double> ExploreConfig::default_a_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 10; ++k) grid.push_back(k / 10.0);
  return grid;
}

OptimizerConfig ExploreConfig::unconstrained_cap() {
  OptimizerConfig c;
  c.position_cap = 1.0;
  return c;
}

void ExploreConfig::validate() const {
  if (n_boot < 1) throw Error(ErrorKind::invalid_input, "n_boot must be >= 1");
  if (sample_size < 2) throw Error(ErrorKind::invalid_input, "sample_size must be >= 2");
  if (a_grid.empty()) throw Error(ErrorKind::invalid_input, "the a grid is empty");
  for (const double a : a_grid) {
    if (!(a >= 0.0 && a <= 1.5)) throw Error(ErrorKind::invalid_input, fmt::format("a = {} outside [0, 1.5]", a));
  }
  if (window() < 2) throw Error(ErrorKind::invalid_input, "window must be >= 2 days");
  if (rebalance_months < 1) throw Error(ErrorKind::invalid_input, "rebalance_months must be >= 1");
  if (projection_n_boot < 1) throw Error(ErrorKind::invalid_input, "projection_n_boot must be >= 1");
  if (projection_sample_size < 3) throw Error(ErrorKind::invalid_input, "projection_sample_size must be >= 3");
  optimizer.validate();
  cleaning.validate();
}

std::vector<SweepRow> SweepTable::series(CovarianceMode mode) const {
  std::vector<SweepRow> out;
  for (const auto& row : rows) {
    if (row.covariance == mode) out.push_back(row);
  }
  return out;
}

std::vector<Index> complete_history_assets(const ReturnsPanel& returns) {
  std::vector<Index> out;
  for (Index i = 0; i < returns.n_assets(); ++i) {
    if (returns.returns.row(i).allFinite()) out.push_back(i);
  }
  return out;
}

SweepTable sweep_a(const ReturnsPanel& returns, const Vector& benchmark, const ExploreConfig& cfg) {
  cfg.validate();
  returns.validate();
  if (returns.is_normalized) throw Error(ErrorKind::invalid_input, "the sweep needs raw returns");
  const std::size_t n_dates = returns.dates.size();
  if (static_cast<std::size_t>(benchmark.size()) != n_dates) {
    throw Error(ErrorKind::invalid_input, "benchmark series is not aligned with the returns dates");
  }
  const std::vector<Index> complete = complete_history_assets(returns);
  if (complete.size() < cfg.sample_size) {
    throw Error(ErrorKind::pool_too_small, fmt::format("{} assets with complete history, sample size {}",
                                                       complete.size(), cfg.sample_size));
  }
  const std::size_t window = cfg.window();
  const auto schedule = rebalance_indices(returns.dates, window + cfg.lag_days, cfg.rebalance_months);
  if (schedule.size() < 2) {
    throw Error(ErrorKind::invalid_window,
                fmt::format("{} days leave {} rebalance dates after a {}-day window", n_dates, schedule.size(), window));
  }
  const Vector bench = benchmark.segment(static_cast<Index>(schedule.front() + 1),
                                         static_cast<Index>(n_dates - 1 - schedule.front()));
  if (!bench.allFinite()) throw Error(ErrorKind::invalid_input, "benchmark has missing values in the study period");

  const std::size_t n_boot = cfg.n_boot;
  const std::size_t n_reb = schedule.size();
  const std::size_t n_grid = cfg.a_grid.size();

  std::vector<std::vector<Index>> samples(n_boot);
  for (std::size_t b = 0; b < n_boot; ++b) {
    const auto picks = sample_without_replacement(static_cast<Index>(complete.size()),
                                                  static_cast<Index>(cfg.sample_size),
                                                  mix_seed(mix_seed(cfg.seed, kSweepStream), b));
    for (const Index p : picks) samples[b].push_back(complete[static_cast<std::size_t>(p)]);
  }

  std::vector<Cell> cells(n_boot * n_reb);
  parallel_for(cells.size(), cfg.jobs, [&](std::size_t idx) {
    const std::size_t b = idx / n_reb;
    const std::size_t r = idx % n_reb;
    const std::size_t t = schedule[r];
    const ReturnsPanel panel = cross_sectional_normalize(
        returns.select_assets(samples[b]).slice_dates(t - cfg.lag_days - window, t - cfg.lag_days));
    const Window full{0, window};
    std::array<SpectralCovariance, 2> covs;
    try {
      covs[0] = empirical_covariance(panel, full);
      CleaningConfig cc = cfg.cleaning;
      cc.seed = mix_seed(mix_seed(mix_seed(cfg.seed, kCleaningStream), b), r);
      cc.jobs = 1;
      covs[1] = cross_validated_clean(panel, full, cc);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("sample {}, rebalance {}: {}", b, format_date(returns.dates[t]), e.what()));
    }
    Cell& cell = cells[idx];
    for (std::size_t m = 0; m < kModes.size(); ++m) {
      for (const double a : cfg.a_grid) {
        try {
          const TargetPortfolio target = continuum_target(covs[m], Vector(), Vector(), a, 0.0, 0.0);
          cell.shorts[m].push_back((target.weights.array() < 0.0).count());
          cell.weights[m].push_back(solve_tracking(covs[m], target, cfg.optimizer).weights);
        } catch (const ConvergenceError& e) {
          throw ConvergenceError(fmt::format("sample {}, a = {}: {}", b, a, e.what()), e.residual(), e.iterations());
        } catch (const Error& e) {
          throw Error(e.kind(), fmt::format("sample {}, a = {}: {}", b, a, e.what()));
        }
      }
    }
  });

  SweepTable table;
  table.n_boot = n_boot;
  table.sample_size = cfg.sample_size;
  table.n_rebalances = n_reb;
  const double bench_var = stats::variance(bench);
  if (!(bench_var > 0.0)) throw Error(ErrorKind::beta_undefined, "benchmark has zero variance");

  for (std::size_t m = 0; m < kModes.size(); ++m) {
    for (std::size_t g = 0; g < n_grid; ++g) {
      SweepRow row;
      row.covariance = kModes[m];
      row.a = cfg.a_grid[g];
      for (std::size_t b = 0; b < n_boot; ++b) {
        Matrix sample_returns(static_cast<Index>(samples[b].size()), returns.n_dates());
        for (std::size_t k = 0; k < samples[b].size(); ++k) {
          sample_returns.row(static_cast<Index>(k)) = returns.returns.row(samples[b][k]);
        }
        std::vector<Vector> weights;
        double shorts = 0.0;
        double n_eff = 0.0;
        double positions = 0.0;
        for (std::size_t r = 0; r < n_reb; ++r) {
          const Cell& cell = cells[b * n_reb + r];
          weights.push_back(cell.weights[m][g]);
          shorts += static_cast<double>(cell.shorts[m][g]);
          n_eff += herfindahl_neff(weights.back()).n_eff;
          positions += static_cast<double>(count_positions(weights.back()));
        }
        const Holding h = hold_between_rebalances(sample_returns, schedule, weights);
        double gamma = 0.0;
        double gamma_drift = 0.0;
        for (std::size_t r = 1; r < n_reb; ++r) {
          gamma += (weights[r] - weights[r - 1]).cwiseAbs().sum();
          gamma_drift += (weights[r] - h.drifted[r]).cwiseAbs().sum();
        }
        const double reb = static_cast<double>(n_reb);
        row.short_count += shorts / reb;
        row.n_eff += n_eff / reb;
        row.n_positions += positions / reb;
        row.gamma += gamma / (reb - 1.0);
        row.gamma_drift += gamma_drift / (reb - 1.0);
        row.volatility += std::sqrt(stats::variance(h.daily) * kTradingDaysPerYear);
        row.beta += stats::covariance(h.daily, bench) / bench_var;
        row.correlation += stats::correlation(h.daily, bench);
      }
      const double nb = static_cast<double>(n_boot);
      row.volatility /= nb;
      row.beta /= nb;
      row.correlation /= nb;
      row.short_count /= nb;
      row.n_eff /= nb;
      row.n_positions /= nb;
      row.gamma /= nb;
      row.gamma_drift /= nb;
      table.rows.push_back(row);
    }
  }
  return table;
}

Index projection_crossing(const Vector& mean_p_res, Index n) {
  const double level = (1.0 + std::sqrt(2.0)) / static_cast<double>(n);
  Index k_star = 1;
  for (Index k = 1; k < mean_p_res.size(); ++k) {
    if (mean_p_res(k) >= level) k_star = k + 1;
  }
  return k_star;
}

ProjectionTable projection_study(const ReturnsPanel& returns, const ExploreConfig& cfg) {
  cfg.validate();
  returns.validate();
  const std::vector<Index> complete = complete_history_assets(returns);
  const std::size_t n = cfg.projection_sample_size;
  if (complete.size() < n) {
    throw Error(ErrorKind::pool_too_small,
                fmt::format("{} assets with complete history, projection sample size {}", complete.size(), n));
  }
  const std::size_t n_dates = returns.dates.size();
  const std::size_t length = cfg.projection_window_days == 0 ? n_dates : cfg.projection_window_days;
  if (length < 2 || length > n_dates) {
    throw Error(ErrorKind::invalid_window, fmt::format("projection window of {} days over {} dates", length, n_dates));
  }
  const Window window{n_dates - length, n_dates};

  const std::size_t n_boot = cfg.projection_n_boot;
  std::vector<Vector> lambdas(n_boot);
  std::vector<Vector> projections(n_boot);
  std::vector<char> skipped(n_boot, 0);
  parallel_for(n_boot, cfg.jobs, [&](std::size_t b) {
    const auto picks = sample_without_replacement(static_cast<Index>(complete.size()), static_cast<Index>(n),
                                                  mix_seed(mix_seed(cfg.seed, kProjectionStream), b));
    std::vector<Index> assets;
    for (const Index p : picks) assets.push_back(complete[static_cast<std::size_t>(p)]);
    const ReturnsPanel panel =
        cross_sectional_normalize(returns.select_assets(assets).slice_dates(window.begin, window.end));
    const SpectralCovariance cov = empirical_covariance(panel, Window{0, length});
    try {
      projections[b] = residual_projection(cov);
      lambdas[b] = cov.eigenvalues();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_residual) throw;
      skipped[b] = 1;
    }
  });

  ProjectionTable table;
  table.n = static_cast<Index>(n);
  table.random_level = 1.0 / static_cast<double>(n);
  table.one_sigma_level = (1.0 + std::sqrt(2.0)) / static_cast<double>(n);
  const auto dim = static_cast<Index>(n);
  Vector sum_lambda = Vector::Zero(dim);
  Vector sum_log_lambda = Vector::Zero(dim);
  Vector sum_p = Vector::Zero(dim);
  Vector sum_log_p = Vector::Zero(dim);
  for (std::size_t b = 0; b < n_boot; ++b) {
    if (skipped[b]) {
      ++table.samples_skipped;
      continue;
    }
    ++table.samples_used;
    sum_lambda += lambdas[b];
    sum_p += projections[b];
    for (Index k = 0; k < dim; ++k) {
      sum_log_lambda(k) += lambdas[b](k) > 0.0 ? std::log(lambdas[b](k)) : kMissing;
      sum_log_p(k) += k > 0 && projections[b](k) > 0.0 ? std::log(projections[b](k)) : kMissing;
    }
  }
  if (table.samples_used == 0) throw Error(ErrorKind::degenerate_residual, "every projection sample was degenerate");
  const double used = static_cast<double>(table.samples_used);
  const Vector mean_p = sum_p / used;
  for (Index k = 0; k < dim; ++k) {
    ProjectionRow row;
    row.k = k + 1;
    row.mean_lambda = sum_lambda(k) / used;
    row.mean_log_lambda = sum_log_lambda(k) / used;
    row.mean_p_res = mean_p(k);
    row.mean_log_p_res = sum_log_p(k) / used;
    table.rows.push_back(row);
  }
  table.k_star = projection_crossing(mean_p, dim);
  return table;
}

}  // namespace agal
