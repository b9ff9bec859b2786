#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agal/backtest.hpp"
#include "agal/data.hpp"
#include "agal/explore.hpp"
#include "agal/factors.hpp"
#include "agal/metrics.hpp"
#include "agal/optimizer.hpp"
#include "agal/spectrum.hpp"
#include "agal/targets.hpp"

namespace agal::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// Shortest round-trip text of a double; NaN becomes an empty field.
std::string format_number(double x);
/// Empty or "nan" fields parse as NaN.
double parse_number(const std::string& text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name, or npos.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

struct MarketData {
  PricePanel prices;
  std::optional<MarketCapPanel> caps;
};

/// Long files have a header `date,asset_id,price[,market_cap]`; wide files `date,<id>,<id>,...`.
/// A separate caps file (long `date,asset_id,market_cap` or wide) overrides caps in the price file.
MarketData read_market_data(const fs::path& prices, const std::optional<fs::path>& caps = std::nullopt);

/// Long layout `date,asset_id,price,market_cap`, rows sorted by date then asset.
std::string prices_long_csv(const PricePanel& prices, const MarketCapPanel* caps);

/// Wide layout `date,<id>,...`, one row per date.
std::string returns_wide_csv(const ReturnsPanel& returns);

struct ReturnsData {
  ReturnsPanel returns;
  std::optional<MarketCapPanel> caps;
};

/// A wide returns file, or a price file (long with a `price` column) converted to returns.
ReturnsData read_returns(const fs::path& path);

Json covariance_json(const SpectralCovariance& cov, const std::vector<std::string>& asset_ids, const Json& meta);
struct CovarianceFile {
  std::vector<std::string> asset_ids;
  SpectralCovariance cov;
};
CovarianceFile read_covariance(const fs::path& path);

Json target_json(const TargetPortfolio& target, const std::vector<std::string>& asset_ids);
struct TargetFile {
  std::vector<std::string> asset_ids;
  std::string spec;
  Vector weights;
};
TargetFile read_target(const fs::path& path);

/// `asset_id,market_cap` pairs, or the latest row of a cap panel; ordered like `asset_ids`.
Vector read_caps_vector(const fs::path& path, const std::vector<std::string>& asset_ids);

std::string weights_csv(const std::vector<std::string>& asset_ids, const Vector& weights, const Vector& target);
Json solution_json(const ConstrainedPortfolio& sol, const OptimizerConfig& cfg);

/// Metric rows (ER, TR, Vol, SR, No. Pos., N_eff, Turnover, rho, beta, alpha) by method columns.
std::string metrics_csv(const std::vector<MetricsReport>& reports);
Json metrics_json(const std::vector<MetricsReport>& reports);

/// Writes every data file of a backtest report into `dir`.
void write_backtest_report(const fs::path& dir, const BacktestReport& report);

/// Method daily returns from a backtest directory (daily_returns.csv).
std::vector<MethodSeries> read_daily_returns(const fs::path& dir);

std::string sweep_csv_vol_beta_corr(const SweepTable& table);
std::string sweep_csv_shorts(const SweepTable& table);
std::string sweep_csv_neff(const SweepTable& table);
std::string sweep_csv_gamma(const SweepTable& table);
std::string projection_csv(const ProjectionTable& table);
Json projection_summary_json(const ProjectionTable& table);

/// Table layout: zone, quantity (rho_LV, rho*_LV, rho_Lb, rho*_Lb), one column per method.
std::string exposures_csv(const std::string& zone, const std::vector<ExposureRow>& rows);

/// Flat key/value view of a TOML subset: `[section]` headers, `key = value` lines, `#` comments,
/// quoted strings, numbers, booleans and one-line arrays. Keys are returned as `section.key`.
using ConfigValue = std::vector<std::string>;
std::map<std::string, ConfigValue> parse_config(const std::string& text);

struct BacktestJob {
  fs::path prices;
  std::optional<fs::path> caps;
  BacktestConfig config;
};

/// Builds a backtest job from config text; relative input paths resolve against `base_dir`.
BacktestJob backtest_job_from_config(const std::string& text, const fs::path& base_dir);

}  // namespace agal::io
