#include "agal/factors.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "agal/error.hpp"
#include "agal/parallel.hpp"
#include "agal/stats.hpp"

namespace agal {

namespace {

// Sample sd of x over [begin, end], or NaN if any entry is missing.
double window_sd(const Vector& x, std::size_t begin, std::size_t end) {
  const auto len = static_cast<Index>(end - begin + 1);
  const auto seg = x.segment(static_cast<Index>(begin), len);
  if (!seg.allFinite()) return kMissing;
  const double m = seg.mean();
  return std::sqrt((seg.array() - m).square().sum() / static_cast<double>(len - 1));
}

double correlation_or_throw(const Vector& x, const Vector& y, const std::string& what) {
  if (x.size() < 2) throw Error(ErrorKind::undefined_correlation, fmt::format("{}: fewer than two observations", what));
  const double c = stats::correlation(x, y);
  if (std::isnan(c)) throw Error(ErrorKind::undefined_correlation, fmt::format("{}: zero-variance series", what));
  return c;
}

}  // namespace

void FactorConfig::validate() const {
  if (vol_window < 2 || hedge_beta_window < 2 || vol_estimate_window < 2) {
    throw Error(ErrorKind::invalid_input, "factor windows must be >= 2");
  }
  if (return_horizon < 1) throw Error(ErrorKind::invalid_input, "return_horizon must be >= 1");
  if (!(vol_target > 0.0)) throw Error(ErrorKind::invalid_input, "vol_target must be positive");
}

std::string_view to_string(FactorKind kind) { return kind == FactorKind::low_beta ? "low_beta" : "low_vol"; }

FactorKind parse_factor_kind(std::string_view text) {
  if (text == "low_vol" || text == "low-vol" || text == "lv") return FactorKind::low_vol;
  if (text == "low_beta" || text == "low-beta" || text == "lb") return FactorKind::low_beta;
  throw Error(ErrorKind::invalid_input, fmt::format("unknown factor kind '{}'", text));
}

Vector rank_signal(const Vector& scores) {
  const Index n = scores.size();
  if (n < 2) throw Error(ErrorKind::invalid_input, "rank signal needs at least two assets");
  if (!scores.allFinite()) throw Error(ErrorKind::invalid_input, "rank signal scores must be finite");
  Vector s = (2.0 / static_cast<double>(n)) * stats::average_ranks(scores).array() - 1.0;
  s.array() -= s.mean();
  return s;
}

Matrix rolling_sums(const Matrix& series, std::size_t horizon) {
  if (horizon < 1) throw Error(ErrorKind::invalid_input, "horizon must be >= 1");
  const auto h = static_cast<Index>(horizon);
  Matrix out = Matrix::Constant(series.rows(), series.cols(), kMissing);
  for (Index t = h - 1; t < series.cols(); ++t) out.col(t) = series.middleCols(t - h + 1, h).rowwise().sum();
  return out;
}

Vector rolling_beta(const Vector& y, const Vector& x, std::size_t window, std::size_t lag) {
  if (y.size() != x.size()) throw Error(ErrorKind::invalid_input, "rolling beta series differ in length");
  if (window < 2) throw Error(ErrorKind::invalid_input, "rolling beta window must be >= 2");
  const auto n = static_cast<std::size_t>(y.size());
  Vector out = Vector::Constant(y.size(), kMissing);
  for (std::size_t t = window - 1 + lag; t < n; ++t) {
    const std::size_t end = t - lag;
    const auto begin = static_cast<Index>(end + 1 - window);
    const Vector ys = y.segment(begin, static_cast<Index>(window));
    const Vector xs = x.segment(begin, static_cast<Index>(window));
    if (!ys.allFinite() || !xs.allFinite()) continue;
    const double vx = stats::variance(xs);
    if (vx > 0.0) out(static_cast<Index>(t)) = stats::covariance(ys, xs) / vx;
  }
  return out;
}

FactorSeries build_low_risk_factor(const ReturnsPanel& returns, const Vector& benchmark_mc, FactorKind kind,
                                   const FactorConfig& cfg) {
  cfg.validate();
  returns.validate();
  const Index n = returns.n_assets();
  const auto n_dates = static_cast<std::size_t>(returns.n_dates());
  if (static_cast<std::size_t>(benchmark_mc.size()) != n_dates) {
    throw Error(ErrorKind::invalid_input, "MC series is not aligned with the returns dates");
  }
  const std::size_t first_signal = cfg.return_horizon - 1 + cfg.vol_window - 1 + cfg.signal_lag;
  const std::size_t first_hedged = first_signal + cfg.hedge_beta_window - 1 + cfg.hedge_lag;
  const std::size_t first_scaled = first_hedged + cfg.vol_estimate_window - 1 + cfg.vol_estimate_lag;
  if (first_scaled >= n_dates) {
    throw Error(ErrorKind::coverage, fmt::format("low-risk factor needs more than {} dates, got {}", first_scaled,
                                                 n_dates));
  }

  const Matrix r3 = rolling_sums(returns.returns, cfg.return_horizon);
  const Matrix mc_row = benchmark_mc.transpose();
  const Vector mc3 = rolling_sums(mc_row, cfg.return_horizon).row(0).transpose();

  FactorSeries f;
  f.kind = kind;
  f.dates = returns.dates;
  f.signals = Matrix::Zero(n, static_cast<Index>(n_dates));
  f.raw_returns = Vector::Constant(static_cast<Index>(n_dates), kMissing);

  const std::size_t w = cfg.vol_window;
  parallel_for(n_dates - first_signal, cfg.jobs, [&](std::size_t k) {
    const std::size_t t = first_signal + k;
    const std::size_t end = t - cfg.signal_lag;
    const auto begin = static_cast<Index>(end + 1 - w);
    const Vector m = mc3.segment(begin, static_cast<Index>(w));
    if (!m.allFinite()) return;
    const double vm = stats::variance(m);
    std::vector<Index> members;
    std::vector<double> scores;
    for (Index i = 0; i < n; ++i) {
      const Vector x = r3.row(i).segment(begin, static_cast<Index>(w)).transpose();
      if (!x.allFinite()) continue;
      if (kind == FactorKind::low_vol) {
        const double sd = std::sqrt(stats::variance(x));
        if (!(sd > 0.0)) continue;
        scores.push_back(1.0 / sd);
      } else {
        if (!(vm > 0.0)) continue;
        scores.push_back(-stats::covariance(x, m) / vm);
      }
      members.push_back(i);
    }
    if (members.size() < 2) return;
    const Vector s = rank_signal(stats::to_vector(scores));
    double pnl = 0.0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      const Index i = members[j];
      f.signals(i, static_cast<Index>(t)) = s(static_cast<Index>(j));
      const double r = returns.returns(i, static_cast<Index>(t));
      if (!is_missing(r)) pnl += s(static_cast<Index>(j)) * r;
    }
    f.raw_returns(static_cast<Index>(t)) = pnl;
  });

  f.hedge_beta = rolling_beta(f.raw_returns, benchmark_mc, cfg.hedge_beta_window, cfg.hedge_lag);
  f.hedged_returns = f.raw_returns - f.hedge_beta.cwiseProduct(benchmark_mc);

  f.realized_vol = Vector::Constant(static_cast<Index>(n_dates), kMissing);
  f.returns = Vector::Constant(static_cast<Index>(n_dates), kMissing);
  const double daily_target = cfg.vol_target / std::sqrt(kTradingDaysPerYear);
  double scale = kMissing;
  for (std::size_t t = first_scaled; t < n_dates; ++t) {
    const std::size_t end = t - cfg.vol_estimate_lag;
    const double sd = window_sd(f.hedged_returns, end + 1 - cfg.vol_estimate_window, end);
    f.realized_vol(static_cast<Index>(t)) = sd;
    if (sd > 0.0) {
      scale = daily_target / sd;
    } else {
      spdlog::warn("{} factor: zero rolling vol on {}, keeping the previous scale", to_string(kind),
                   format_date(returns.dates[t]));
    }
    if (!is_missing(scale)) f.returns(static_cast<Index>(t)) = scale * f.hedged_returns(static_cast<Index>(t));
  }
  f.first_valid = first_scaled;
  while (f.first_valid < n_dates && is_missing(f.returns(static_cast<Index>(f.first_valid)))) ++f.first_valid;
  if (f.first_valid >= n_dates) throw Error(ErrorKind::coverage, "low-risk factor has no valid dates");
  return f;
}

std::vector<ExposureRow> exposure_table(const std::vector<MethodSeries>& methods, const MethodSeries& mc,
                                        const FactorSeries& low_vol, const FactorSeries& low_beta,
                                        const FactorConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(mc.returns.size()) != mc.dates.size()) {
    throw Error(ErrorKind::invalid_input, "MC dates and returns differ in length");
  }
  const auto lookup = [&](const FactorSeries& f) {
    Vector v = Vector::Constant(static_cast<Index>(mc.dates.size()), kMissing);
    for (std::size_t k = 0; k < mc.dates.size(); ++k) {
      const auto it = std::lower_bound(f.dates.begin(), f.dates.end(), mc.dates[k]);
      if (it != f.dates.end() && *it == mc.dates[k]) v(static_cast<Index>(k)) = f.returns(it - f.dates.begin());
    }
    return v;
  };
  const Vector lv = lookup(low_vol);
  const Vector lb = lookup(low_beta);

  const auto paired = [](const Vector& a, const Vector& b, const Vector& c) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (Index t = 0; t < a.size(); ++t) {
      if (std::isfinite(a(t)) && std::isfinite(b(t)) && std::isfinite(c(t))) {
        xs.push_back(a(t));
        ys.push_back(b(t));
      }
    }
    return std::pair{stats::to_vector(xs), stats::to_vector(ys)};
  };

  std::vector<ExposureRow> rows;
  for (const auto& m : methods) {
    if (m.dates != mc.dates || m.returns.size() != mc.returns.size()) {
      throw Error(ErrorKind::invalid_input, fmt::format("method {} is not aligned with the MC series", m.name));
    }
    ExposureRow row;
    row.method = m.name;
    const Vector beta = rolling_beta(m.returns, mc.returns, cfg.hedge_beta_window, cfg.hedge_lag);
    const Vector residual = m.returns - beta.cwiseProduct(mc.returns);

    // rho is measured on the same dates as rho* so both use one sample.
    const auto [y_lv, f_lv] = paired(m.returns, lv, residual);
    const auto [y_lb, f_lb] = paired(m.returns, lb, residual);
    row.rho_low_vol = correlation_or_throw(y_lv, f_lv, m.name + " vs low-vol");
    row.rho_low_beta = correlation_or_throw(y_lb, f_lb, m.name + " vs low-beta");

    const auto [e_lv, g_lv] = paired(residual, lv, residual);
    const auto [e_lb, g_lb] = paired(residual, lb, residual);
    const double ve = e_lv.size() > 1 ? stats::variance(e_lv) : 0.0;
    const double vy = y_lv.size() > 1 ? stats::variance(y_lv) : 0.0;
    if (!(ve > 1e-20 * vy)) {
      row.residual_degenerate = true;
    } else {
      row.rho_star_low_vol = correlation_or_throw(e_lv, g_lv, m.name + " residual vs low-vol");
      row.rho_star_low_beta = correlation_or_throw(e_lb, g_lb, m.name + " residual vs low-beta");
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace agal
