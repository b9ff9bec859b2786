#include "agal/data.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "agal/error.hpp"

namespace agal {

namespace {

void check_axes(const std::vector<std::string>& ids, const std::vector<Date>& dates, Index rows,
                Index cols, std::string_view what) {
  if (static_cast<Index>(ids.size()) != rows || static_cast<Index>(dates.size()) != cols) {
    throw Error(ErrorKind::invalid_input,
                fmt::format("{}: matrix is {}x{} but axes are {}x{}", what, rows, cols, ids.size(),
                            dates.size()));
  }
  for (std::size_t t = 1; t < dates.size(); ++t) {
    if (!(dates[t - 1] < dates[t])) {
      throw Error(ErrorKind::invalid_input,
                  fmt::format("{}: dates not strictly increasing at {}", what, format_date(dates[t])));
    }
  }
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw Error(ErrorKind::invalid_input, fmt::format("{}: duplicate asset id '{}'", what, id));
    }
  }
}

}  // namespace

void PricePanel::validate() const {
  check_axes(asset_ids, dates, prices.rows(), prices.cols(), "price panel");
  for (Index i = 0; i < prices.rows(); ++i) {
    for (Index t = 0; t < prices.cols(); ++t) {
      const double p = prices(i, t);
      if (!is_missing(p) && !(p > 0.0)) {
        throw Error(ErrorKind::invalid_input,
                    fmt::format("non-positive price {} for {} on {}", p, asset_ids[i], format_date(dates[t])));
      }
    }
  }
}

void ReturnsPanel::validate() const {
  check_axes(asset_ids, dates, returns.rows(), returns.cols(), "returns panel");
  if (is_normalized) return;
  for (Index i = 0; i < returns.rows(); ++i) {
    for (Index t = 0; t < returns.cols(); ++t) {
      const double r = returns(i, t);
      if (!is_missing(r) && !(r > -1.0)) {
        throw Error(ErrorKind::invalid_input,
                    fmt::format("return {} <= -1 for {} on {}", r, asset_ids[i], format_date(dates[t])));
      }
    }
  }
}

ReturnsPanel ReturnsPanel::select_assets(const std::vector<Index>& assets) const {
  ReturnsPanel out;
  out.dates = dates;
  out.is_normalized = false;
  out.returns.resize(static_cast<Index>(assets.size()), returns.cols());
  out.asset_ids.reserve(assets.size());
  for (std::size_t k = 0; k < assets.size(); ++k) {
    out.asset_ids.push_back(asset_ids.at(static_cast<std::size_t>(assets[k])));
    out.returns.row(static_cast<Index>(k)) = returns.row(assets[k]);
  }
  // A row subset of a normalized panel is no longer unit-norm per date.
  return out;
}

ReturnsPanel ReturnsPanel::slice_dates(std::size_t begin, std::size_t end) const {
  if (begin > end || end > dates.size()) {
    throw Error(ErrorKind::invalid_window, fmt::format("date slice [{}, {}) outside axis of {}", begin, end, dates.size()));
  }
  ReturnsPanel out;
  out.asset_ids = asset_ids;
  out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin), dates.begin() + static_cast<std::ptrdiff_t>(end));
  out.returns = returns.middleCols(static_cast<Index>(begin), static_cast<Index>(end - begin));
  out.is_normalized = is_normalized;
  return out;
}

void MarketCapPanel::validate() const {
  check_axes(asset_ids, dates, caps.rows(), caps.cols(), "market cap panel");
  for (Index i = 0; i < caps.rows(); ++i) {
    for (Index t = 0; t < caps.cols(); ++t) {
      const double c = caps(i, t);
      if (!is_missing(c) && !(c > 0.0)) {
        throw Error(ErrorKind::invalid_input, fmt::format("non-positive market cap for {}", asset_ids[i]));
      }
    }
  }
}

Vector MarketCapPanel::caps_as_of(Date date) const {
  Vector out = Vector::Constant(caps.rows(), kMissing);
  const auto last = std::upper_bound(dates.begin(), dates.end(), date);
  const Index end = static_cast<Index>(last - dates.begin());
  for (Index i = 0; i < caps.rows(); ++i) {
    for (Index t = end - 1; t >= 0; --t) {
      if (!is_missing(caps(i, t))) {
        out(i) = caps(i, t);
        break;
      }
    }
  }
  return out;
}

void PoolConfig::validate() const {
  if (!(min_coverage_fraction > 0.0 && min_coverage_fraction <= 1.0)) {
    throw Error(ErrorKind::invalid_input, "min_coverage_fraction must lie in (0, 1]");
  }
  if (pool_size < 2 && min_pool_size >= 2) {
    throw Error(ErrorKind::invalid_input, "pool_size must be >= 2");
  }
  if (liquidity_window_days == 0 || coverage_lookback_days == 0) {
    throw Error(ErrorKind::invalid_input, "pool windows must be positive");
  }
}

ReturnsPanel compute_returns(const PricePanel& prices) {
  if (prices.n_dates() < 2) {
    throw Error(ErrorKind::invalid_input, "compute_returns needs at least 2 dates");
  }
  prices.validate();
  ReturnsPanel out;
  out.asset_ids = prices.asset_ids;
  out.dates.assign(prices.dates.begin() + 1, prices.dates.end());
  const Index n = prices.n_assets();
  const Index t_out = prices.n_dates() - 1;
  out.returns.resize(n, t_out);
  for (Index i = 0; i < n; ++i) {
    for (Index t = 0; t < t_out; ++t) {
      const double prev = prices.prices(i, t);
      const double cur = prices.prices(i, t + 1);
      out.returns(i, t) = (is_missing(prev) || is_missing(cur)) ? kMissing : cur / prev - 1.0;
    }
  }
  return out;
}

ReturnsPanel cross_sectional_normalize(const ReturnsPanel& returns) {
  if (returns.is_normalized) return returns;
  ReturnsPanel out = returns;
  out.is_normalized = true;
  out.degenerate_dates.clear();
  for (Index t = 0; t < out.returns.cols(); ++t) {
    double sumsq = 0.0;
    for (Index i = 0; i < out.returns.rows(); ++i) {
      const double r = out.returns(i, t);
      if (!is_missing(r)) sumsq += r * r;
    }
    if (sumsq == 0.0) {
      out.degenerate_dates.push_back(out.dates[static_cast<std::size_t>(t)]);
      spdlog::warn("cross-section on {} is identically zero; normalized returns set to 0",
                   format_date(out.dates[static_cast<std::size_t>(t)]));
      continue;
    }
    const double norm = std::sqrt(sumsq);
    for (Index i = 0; i < out.returns.rows(); ++i) {
      double& r = out.returns(i, t);
      if (!is_missing(r)) r /= norm;
    }
  }
  return out;
}

namespace {

std::size_t cap_column_before_or_at(const MarketCapPanel& caps, Date d) {
  const auto it = std::upper_bound(caps.dates.begin(), caps.dates.end(), d);
  if (it == caps.dates.begin()) return npos;
  return static_cast<std::size_t>(it - caps.dates.begin()) - 1;
}

}  // namespace

Vector liquidity_scores(const ReturnsPanel& returns, const MarketCapPanel& caps,
                        std::size_t as_of_index, std::size_t window) {
  if (as_of_index >= returns.dates.size()) {
    throw Error(ErrorKind::invalid_window, "liquidity window ends past the date axis");
  }
  if (caps.asset_ids != returns.asset_ids) {
    throw Error(ErrorKind::invalid_input, "market cap panel assets do not match returns panel");
  }
  const std::size_t begin = as_of_index + 1 >= window ? as_of_index + 1 - window : 0;
  const Index n = returns.n_assets();
  Vector score = Vector::Constant(n, kMissing);
  for (Index i = 0; i < n; ++i) {
    double cap_sum = 0.0;
    double abs_sum = 0.0;
    int cap_count = 0;
    int ret_count = 0;
    for (std::size_t t = begin; t <= as_of_index; ++t) {
      const double r = returns.returns(i, static_cast<Index>(t));
      if (!is_missing(r)) {
        abs_sum += std::abs(r);
        ++ret_count;
      }
      const std::size_t c = cap_column_before_or_at(caps, returns.dates[t]);
      if (c != npos && !is_missing(caps.caps(i, static_cast<Index>(c)))) {
        cap_sum += caps.caps(i, static_cast<Index>(c));
        ++cap_count;
      }
    }
    if (cap_count > 0 && ret_count > 0) {
      score(i) = (cap_sum / cap_count) * (abs_sum / ret_count);
    }
  }
  return score;
}

std::vector<Index> liquidity_ranked_pool(const ReturnsPanel& returns, const MarketCapPanel& caps,
                                         std::size_t as_of_index, const PoolConfig& cfg) {
  const Vector score = liquidity_scores(returns, caps, as_of_index, cfg.liquidity_window_days);
  std::vector<Index> ranked;
  for (Index i = 0; i < score.size(); ++i) {
    if (!is_missing(score(i))) ranked.push_back(i);
  }
  // Highest score first; index breaks ties so the result is deterministic.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](Index a, Index b) { return score(a) > score(b); });
  if (ranked.size() > cfg.pool_size) ranked.resize(cfg.pool_size);
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

std::vector<Index> coverage_filter(const ReturnsPanel& returns, const std::vector<Index>& members,
                                   std::size_t as_of_index, const PoolConfig& cfg) {
  const std::size_t lookback = cfg.coverage_lookback_days;
  if (as_of_index >= returns.dates.size() || as_of_index + 1 < lookback) {
    throw Error(ErrorKind::invalid_window,
                fmt::format("coverage lookback of {} days not available at index {}", lookback, as_of_index));
  }
  const std::size_t begin = as_of_index + 1 - lookback;
  std::vector<Index> kept;
  for (const Index i : members) {
    std::size_t present = 0;
    for (std::size_t t = begin; t <= as_of_index; ++t) {
      if (!is_missing(returns.returns(i, static_cast<Index>(t)))) ++present;
    }
    const double fraction = static_cast<double>(present) / static_cast<double>(lookback);
    if (fraction >= cfg.min_coverage_fraction) kept.push_back(i);
  }
  return kept;
}

std::vector<std::string> apply_pool_filter(const ReturnsPanel& returns, const MarketCapPanel& caps,
                                           const PoolConfig& cfg, Date as_of) {
  cfg.validate();
  const std::size_t t = find_date(returns.dates, as_of);
  if (t == npos) {
    throw Error(ErrorKind::invalid_input, fmt::format("as-of date {} not in the date axis", format_date(as_of)));
  }
  const auto liquid = liquidity_ranked_pool(returns, caps, t, cfg);
  const auto kept = coverage_filter(returns, liquid, t, cfg);
  if (kept.size() < cfg.min_pool_size) {
    throw Error(ErrorKind::pool_too_small,
                fmt::format("{} assets survive the pool filter on {} (need {})", kept.size(),
                            format_date(as_of), cfg.min_pool_size));
  }
  std::vector<std::string> ids;
  ids.reserve(kept.size());
  for (const Index i : kept) ids.push_back(returns.asset_ids[static_cast<std::size_t>(i)]);
  return ids;
}

SyntheticUniverse generate_synthetic_universe(std::size_t n_assets, std::size_t n_days,
                                              std::size_t n_factors, std::uint64_t seed,
                                              const SyntheticConfig& cfg) {
  if (n_assets < 2 || n_days < 2 || n_factors < 1) {
    throw Error(ErrorKind::invalid_input, "synthetic universe needs n_assets >= 2, n_days >= 2, n_factors >= 1");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const Index n = static_cast<Index>(n_assets);
  const Index k = static_cast<Index>(n_factors);
  const std::size_t n_sectors = n_factors - 1;

  SyntheticUniverse u;
  u.sector.assign(n_assets, -1);
  if (n_sectors > 0) {
    std::vector<int> labels(n_assets);
    for (std::size_t i = 0; i < n_assets; ++i) labels[i] = static_cast<int>(i % n_sectors);
    for (std::size_t i = n_assets; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(labels[i - 1], labels[pick(rng)]);
    }
    u.sector = labels;
  }

  std::vector<double> sector_beta(std::max<std::size_t>(n_sectors, 1), 0.0);
  if (n_sectors > 0) {
    for (auto& level : sector_beta) level = cfg.sector_beta_dispersion * normal(rng);
  }
  u.loadings = Matrix::Zero(n, k);
  u.idio_vol.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double level = n_sectors > 0 ? sector_beta[static_cast<std::size_t>(u.sector[static_cast<std::size_t>(i)])] : 0.0;
    const double beta = std::clamp(std::exp(level + cfg.beta_dispersion * normal(rng)), 0.25, 2.5);
    u.loadings(i, 0) = beta * cfg.market_vol_daily;
    if (n_sectors > 0) {
      const double load = 0.5 + uniform(rng);
      u.loadings(i, 1 + u.sector[static_cast<std::size_t>(i)]) = load * cfg.sector_vol_daily;
    }
    u.idio_vol(i) = cfg.idio_vol_median_daily * std::exp(cfg.idio_vol_dispersion * normal(rng));
  }

  // Cash-neutral tilt: +1 for the lowest idiosyncratic vol, -1 for the highest.
  std::vector<Index> order(n_assets);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return u.idio_vol(a) < u.idio_vol(b); });
  Vector tilt(n);
  for (Index r = 0; r < n; ++r) {
    tilt(order[static_cast<std::size_t>(r)]) = 1.0 - 2.0 * static_cast<double>(r) / static_cast<double>(n - 1);
  }
  u.true_mean = (u.loadings.col(0) / cfg.market_vol_daily) * (cfg.market_drift_annual / kTradingDaysPerYear) +
                tilt * (cfg.low_vol_premium_annual / kTradingDaysPerYear);
  u.true_covariance = u.loadings * u.loadings.transpose();
  u.true_covariance.diagonal() += u.idio_vol.array().square().matrix();

  Vector start_price(n);
  Vector shares(n);
  for (Index i = 0; i < n; ++i) {
    start_price(i) = 100.0 * std::exp(0.5 * normal(rng));
    shares(i) = std::exp(cfg.cap_log_median + cfg.cap_log_sigma * normal(rng)) / start_price(i);
  }

  u.prices.dates = business_days(cfg.start, n_days);
  u.prices.asset_ids.reserve(n_assets);
  for (std::size_t i = 0; i < n_assets; ++i) u.prices.asset_ids.push_back(fmt::format("S{:04d}", i));
  u.prices.prices.resize(n, static_cast<Index>(n_days));
  u.prices.prices.col(0) = start_price;

  Vector factors(k);
  for (std::size_t t = 1; t < n_days; ++t) {
    for (Index f = 0; f < k; ++f) factors(f) = normal(rng);
    const Vector common = u.loadings * factors;
    for (Index i = 0; i < n; ++i) {
      const double r = std::max(u.true_mean(i) + common(i) + u.idio_vol(i) * normal(rng), -0.9);
      u.prices.prices(i, static_cast<Index>(t)) = u.prices.prices(i, static_cast<Index>(t) - 1) * (1.0 + r);
    }
  }

  u.caps.asset_ids = u.prices.asset_ids;
  u.caps.dates = u.prices.dates;
  u.caps.caps = u.prices.prices.array().colwise() * shares.array();
  return u;
}

Vector market_cap_index_returns(const ReturnsPanel& returns, const MarketCapPanel& caps) {
  if (caps.asset_ids != returns.asset_ids) {
    throw Error(ErrorKind::invalid_input, "market cap panel assets do not match returns panel");
  }
  const Index n = returns.n_assets();
  Vector out(returns.n_dates());
  for (Index t = 0; t < returns.n_dates(); ++t) {
    const Date d = returns.dates[static_cast<std::size_t>(t)];
    // Weights come from the last cap strictly before the return date.
    const auto it = std::lower_bound(caps.dates.begin(), caps.dates.end(), d);
    double num = 0.0;
    double den = 0.0;
    if (it != caps.dates.begin()) {
      const Index c = static_cast<Index>(it - caps.dates.begin()) - 1;
      for (Index i = 0; i < n; ++i) {
        const double w = caps.caps(i, c);
        const double r = returns.returns(i, t);
        if (is_missing(w) || is_missing(r)) continue;
        num += w * r;
        den += w;
      }
    }
    out(t) = den > 0.0 ? num / den : 0.0;
  }
  return out;
}

}  // namespace agal
