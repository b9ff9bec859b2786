#include "agal/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "agal/error.hpp"

namespace agal::io {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

struct LongRecord {
  Date date;
  std::string id;
  double value;
};

// Builds an N x T matrix from (date, id, value) triples; absent cells are NaN.
void assemble(const std::vector<LongRecord>& records, std::vector<std::string>& ids, std::vector<Date>& dates,
              Matrix& values, const std::string& what) {
  std::set<std::string> id_set;
  std::set<Date> date_set;
  for (const auto& r : records) {
    id_set.insert(r.id);
    date_set.insert(r.date);
  }
  ids.assign(id_set.begin(), id_set.end());
  dates.assign(date_set.begin(), date_set.end());
  values = Matrix::Constant(static_cast<Index>(ids.size()), static_cast<Index>(dates.size()), kMissing);
  for (const auto& r : records) {
    const auto i = std::lower_bound(ids.begin(), ids.end(), r.id) - ids.begin();
    const auto t = std::lower_bound(dates.begin(), dates.end(), r.date) - dates.begin();
    if (!is_missing(values(i, t))) {
      throw Error(ErrorKind::invalid_input,
                  fmt::format("duplicate {} entry for {} on {}", what, r.id, format_date(r.date)));
    }
    values(i, t) = r.value;
  }
}

struct Panel {
  std::vector<std::string> ids;
  std::vector<Date> dates;
  Matrix values;
};

Panel wide_panel(const CsvTable& t, const std::string& what) {
  if (t.header.size() < 2 || lower(t.header[0]) != "date") {
    throw Error(ErrorKind::invalid_input, fmt::format("{} file needs a 'date' first column", what));
  }
  Panel p;
  p.ids.assign(t.header.begin() + 1, t.header.end());
  p.values.resize(static_cast<Index>(p.ids.size()), static_cast<Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) {
      throw Error(ErrorKind::invalid_input, fmt::format("{} row {} has {} fields, expected {}", what, r + 2,
                                                        row.size(), t.header.size()));
    }
    p.dates.push_back(parse_date(row[0]));
    for (std::size_t i = 1; i < row.size(); ++i) {
      p.values(static_cast<Index>(i - 1), static_cast<Index>(r)) = parse_number(row[i]);
    }
  }
  for (std::size_t k = 1; k < p.dates.size(); ++k) {
    if (!(p.dates[k - 1] < p.dates[k])) throw Error(ErrorKind::invalid_input, fmt::format("{} dates must increase", what));
  }
  return p;
}

Panel long_panel(const CsvTable& t, const std::string& column, const std::string& what) {
  const std::size_t cd = t.column("date");
  const std::size_t ci = t.column("asset_id");
  const std::size_t cv = t.column(column);
  if (cd == npos || ci == npos || cv == npos) {
    throw Error(ErrorKind::invalid_input, fmt::format("{} file needs date, asset_id and {} columns", what, column));
  }
  std::vector<LongRecord> records;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) {
      throw Error(ErrorKind::invalid_input, fmt::format("{} row {} has {} fields, expected {}", what, r + 2,
                                                        row.size(), t.header.size()));
    }
    const double v = parse_number(row[cv]);
    if (is_missing(v)) continue;
    records.push_back({parse_date(row[cd]), row[ci], v});
  }
  Panel p;
  assemble(records, p.ids, p.dates, p.values, what);
  return p;
}

bool is_long(const CsvTable& t) { return t.column("asset_id") != npos; }

// Reorders the rows of `p` to `ids`; assets absent from `p` become all-NaN rows.
Matrix align_rows(const Panel& p, const std::vector<std::string>& ids) {
  Matrix out = Matrix::Constant(static_cast<Index>(ids.size()), static_cast<Index>(p.dates.size()), kMissing);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = std::find(p.ids.begin(), p.ids.end(), ids[i]);
    if (it != p.ids.end()) out.row(static_cast<Index>(i)) = p.values.row(it - p.ids.begin());
  }
  return out;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "";
  return fmt::format("{}", x);
}

double parse_number(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty() || lower(s) == "nan" || lower(s) == "na") return kMissing;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::invalid_input, fmt::format("'{}' is not a number", s));
  }
  return v;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (lower(header[k]) == name) return k;
  }
  return npos;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_input, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::invalid_input, fmt::format("cannot write {}", path.string()));
  out << text;
}

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (first) {
      t.header = split(line, ',');
      first = false;
    } else {
      t.rows.push_back(split(line, ','));
    }
  }
  if (first) throw Error(ErrorKind::invalid_input, fmt::format("{} is empty", path.string()));
  return t;
}

MarketData read_market_data(const fs::path& prices, const std::optional<fs::path>& caps) {
  const CsvTable pt = read_csv(prices);
  MarketData md;
  std::optional<Panel> cap_panel;
  if (is_long(pt)) {
    const Panel p = long_panel(pt, "price", "price");
    md.prices.asset_ids = p.ids;
    md.prices.dates = p.dates;
    md.prices.prices = p.values;
    if (pt.column("market_cap") != npos) cap_panel = long_panel(pt, "market_cap", "market cap");
  } else {
    const Panel p = wide_panel(pt, "price");
    md.prices.asset_ids = p.ids;
    md.prices.dates = p.dates;
    md.prices.prices = p.values;
  }
  if (caps) {
    const CsvTable ct = read_csv(*caps);
    cap_panel = is_long(ct) ? long_panel(ct, "market_cap", "market cap") : wide_panel(ct, "market cap");
  }
  md.prices.validate();
  if (cap_panel) {
    MarketCapPanel mc;
    mc.asset_ids = md.prices.asset_ids;
    mc.dates = cap_panel->dates;
    mc.caps = align_rows(*cap_panel, mc.asset_ids);
    mc.validate();
    md.caps = std::move(mc);
  }
  return md;
}

std::string prices_long_csv(const PricePanel& prices, const MarketCapPanel* caps) {
  std::string out = caps ? "date,asset_id,price,market_cap\n" : "date,asset_id,price\n";
  for (Index t = 0; t < prices.n_dates(); ++t) {
    const Date d = prices.dates[static_cast<std::size_t>(t)];
    const std::string ds = format_date(d);
    Index ct = -1;
    if (caps) {
      const std::size_t k = find_date(caps->dates, d);
      if (k != npos) ct = static_cast<Index>(k);
    }
    for (Index i = 0; i < prices.n_assets(); ++i) {
      const double p = prices.prices(i, t);
      if (is_missing(p)) continue;
      out += fmt::format("{},{},{}", ds, prices.asset_ids[static_cast<std::size_t>(i)], format_number(p));
      if (caps) out += "," + (ct >= 0 ? format_number(caps->caps(i, ct)) : std::string());
      out += "\n";
    }
  }
  return out;
}

std::string returns_wide_csv(const ReturnsPanel& returns) {
  std::string out = "date";
  for (const auto& id : returns.asset_ids) out += "," + id;
  out += "\n";
  for (Index t = 0; t < returns.n_dates(); ++t) {
    out += format_date(returns.dates[static_cast<std::size_t>(t)]);
    for (Index i = 0; i < returns.n_assets(); ++i) out += "," + format_number(returns.returns(i, t));
    out += "\n";
  }
  return out;
}

ReturnsData read_returns(const fs::path& path) {
  const CsvTable t = read_csv(path);
  ReturnsData rd;
  if (is_long(t) && t.column("price") != npos) {
    MarketData md = read_market_data(path);
    rd.returns = compute_returns(md.prices);
    rd.caps = std::move(md.caps);
    return rd;
  }
  const Panel p = is_long(t) ? long_panel(t, "return", "returns") : wide_panel(t, "returns");
  rd.returns.asset_ids = p.ids;
  rd.returns.dates = p.dates;
  rd.returns.returns = p.values;
  rd.returns.validate();
  return rd;
}

Json covariance_json(const SpectralCovariance& cov, const std::vector<std::string>& asset_ids, const Json& meta) {
  Json j;
  j["assets"] = asset_ids;
  j["cleaning"] = std::string(to_string(cov.cleaning_tag()));
  for (const auto& [k, v] : meta.items()) j[k] = v;
  Json rows = Json::array();
  for (Index i = 0; i < cov.size(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < cov.size(); ++k) row.push_back(cov.matrix()(i, k));
    rows.push_back(std::move(row));
  }
  j["matrix"] = std::move(rows);
  j["eigenvalues"] = std::vector<double>(cov.eigenvalues().data(), cov.eigenvalues().data() + cov.size());
  return j;
}

CovarianceFile read_covariance(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_input, fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!j.contains("matrix")) throw Error(ErrorKind::invalid_input, fmt::format("{} has no matrix", path.string()));
  const auto& rows = j["matrix"];
  const auto n = static_cast<Index>(rows.size());
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != n) {
      throw Error(ErrorKind::invalid_input, "covariance matrix is not square");
    }
    for (Index k = 0; k < n; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  }
  CovarianceFile f;
  if (j.contains("assets")) {
    f.asset_ids = j["assets"].get<std::vector<std::string>>();
  } else {
    for (Index i = 0; i < n; ++i) f.asset_ids.push_back(fmt::format("A{}", i));
  }
  if (static_cast<Index>(f.asset_ids.size()) != n) throw Error(ErrorKind::invalid_input, "asset list does not match matrix");
  const CleaningTag tag =
      j.value("cleaning", std::string("raw")) == "cross_validated" ? CleaningTag::cross_validated : CleaningTag::raw;
  f.cov = SpectralCovariance::from_matrix(std::move(m), tag);
  return f;
}

Json target_json(const TargetPortfolio& target, const std::vector<std::string>& asset_ids) {
  Json j;
  j["spec"] = target.spec.name();
  j["omega"] = number_or_null(target.omega);
  j["assets"] = asset_ids;
  j["weights"] = std::vector<double>(target.weights.data(), target.weights.data() + target.weights.size());
  j["risk_contributions"] = std::vector<double>(target.risk_contributions.data(),
                                                target.risk_contributions.data() + target.risk_contributions.size());
  j["short_positions"] = (target.weights.array() < 0.0).count();
  return j;
}

TargetFile read_target(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_input, fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!j.contains("weights")) throw Error(ErrorKind::invalid_input, fmt::format("{} has no weights", path.string()));
  TargetFile f;
  const auto w = j["weights"].get<std::vector<double>>();
  f.weights = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
  f.spec = j.value("spec", std::string());
  if (j.contains("assets")) f.asset_ids = j["assets"].get<std::vector<std::string>>();
  return f;
}

Vector read_caps_vector(const fs::path& path, const std::vector<std::string>& asset_ids) {
  const CsvTable t = read_csv(path);
  std::map<std::string, double> latest;
  const std::size_t ci = t.column("asset_id");
  const std::size_t cv = t.column("market_cap");
  if (ci != npos && cv != npos) {
    const std::size_t cd = t.column("date");
    std::map<std::string, Date> seen;
    for (const auto& row : t.rows) {
      const double v = parse_number(row.at(cv));
      if (is_missing(v)) continue;
      if (cd != npos) {
        const Date d = parse_date(row.at(cd));
        const auto it = seen.find(row.at(ci));
        if (it != seen.end() && it->second > d) continue;
        seen[row.at(ci)] = d;
      }
      latest[row.at(ci)] = v;
    }
  } else {
    const Panel p = wide_panel(t, "market cap");
    for (std::size_t i = 0; i < p.ids.size(); ++i) {
      for (Index k = p.values.cols() - 1; k >= 0; --k) {
        if (!is_missing(p.values(static_cast<Index>(i), k))) {
          latest[p.ids[i]] = p.values(static_cast<Index>(i), k);
          break;
        }
      }
    }
  }
  Vector out(static_cast<Index>(asset_ids.size()));
  for (std::size_t i = 0; i < asset_ids.size(); ++i) {
    const auto it = latest.find(asset_ids[i]);
    if (it == latest.end()) throw Error(ErrorKind::invalid_input, fmt::format("no market cap for {}", asset_ids[i]));
    out(static_cast<Index>(i)) = it->second;
  }
  return out;
}

std::string weights_csv(const std::vector<std::string>& asset_ids, const Vector& weights, const Vector& target) {
  std::string out = target.size() ? "asset_id,weight,target\n" : "asset_id,weight\n";
  for (std::size_t i = 0; i < asset_ids.size(); ++i) {
    out += asset_ids[i] + "," + format_number(weights(static_cast<Index>(i)));
    if (target.size()) out += "," + format_number(target(static_cast<Index>(i)));
    out += "\n";
  }
  return out;
}

Json solution_json(const ConstrainedPortfolio& sol, const OptimizerConfig& cfg) {
  Json j;
  j["position_cap"] = cfg.position_cap;
  j["algorithm"] = std::string(to_string(cfg.algorithm));
  j["objective"] = sol.objective_value;
  j["kkt_residual"] = sol.kkt_residual;
  j["iterations"] = sol.iterations_used;
  j["gross"] = sol.gross;
  j["lower_binding"] = sol.lower_binding;
  j["upper_binding"] = sol.upper_binding;
  return j;
}

namespace {

struct MetricField {
  const char* label;
  const char* key;
  double MetricsReport::*field;
};

constexpr MetricField kMetricFields[] = {
    {"ER", "excess_return", &MetricsReport::excess_return}, {"TR", "total_return", &MetricsReport::total_return},
    {"Vol", "volatility", &MetricsReport::volatility},      {"SR", "sharpe", &MetricsReport::sharpe},
    {"No. Pos.", "n_positions", &MetricsReport::n_positions}, {"N_eff", "n_eff", &MetricsReport::n_eff},
    {"Turnover", "turnover", &MetricsReport::turnover},     {"rho", "rho", &MetricsReport::rho},
    {"beta", "beta", &MetricsReport::beta},                 {"alpha", "alpha", &MetricsReport::alpha},
};

}  // namespace

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "metric";
  for (const auto& r : reports) out += "," + r.method;
  out += "\n";
  for (const auto& f : kMetricFields) {
    out += f.label;
    for (const auto& r : reports) out += "," + format_number(r.*(f.field));
    out += "\n";
  }
  return out;
}

Json metrics_json(const std::vector<MetricsReport>& reports) {
  Json j = Json::array();
  for (const auto& r : reports) {
    Json m;
    m["method"] = r.method;
    for (const auto& f : kMetricFields) m[f.key] = number_or_null(r.*(f.field));
    j.push_back(std::move(m));
  }
  return j;
}

void write_backtest_report(const fs::path& dir, const BacktestReport& report) {
  fs::create_directories(dir);
  std::vector<MetricsReport> metrics;
  for (const auto& m : report.methods) metrics.push_back(m.metrics);
  write_text(dir / "metrics.csv", metrics_csv(metrics));
  write_text(dir / "metrics.json", metrics_json(metrics).dump(2) + "\n");

  const auto series_csv = [&](bool daily) {
    const auto& first = report.methods.front();
    const auto& dates = daily ? first.daily_dates : first.period_returns.dates;
    std::string out = "date";
    for (const auto& m : report.methods) out += "," + m.spec.name();
    out += "\n";
    for (std::size_t t = 0; t < dates.size(); ++t) {
      out += format_date(dates[t]);
      for (const auto& m : report.methods) {
        const Vector& v = daily ? m.daily_returns : m.period_returns.returns;
        out += "," + format_number(v(static_cast<Index>(t)));
      }
      out += "\n";
    }
    return out;
  };
  write_text(dir / "daily_returns.csv", series_csv(true));
  write_text(dir / "period_returns.csv", series_csv(false));

  for (const auto& m : report.methods) {
    std::string out = "date";
    for (const auto& id : report.asset_ids) out += "," + id;
    out += "\n";
    for (Index k = 0; k < m.trail.weights.cols(); ++k) {
      out += format_date(m.trail.dates[static_cast<std::size_t>(k)]);
      for (Index i = 0; i < m.trail.weights.rows(); ++i) out += "," + format_number(m.trail.weights(i, k));
      out += "\n";
    }
    write_text(dir / fmt::format("weights_{}.csv", m.spec.slug()), out);
  }

  std::string reb = "date,window_begin,window_end,pool_size,pool_refreshed,covariance_digest\n";
  for (const auto& r : report.rebalances) {
    reb += fmt::format("{},{},{},{},{},{:016x}\n", format_date(r.date), r.window.begin, r.window.end, r.pool.size(),
                       r.pool_refreshed ? 1 : 0, r.covariance_digest);
  }
  write_text(dir / "rebalances.csv", reb);

  std::string diag = "date";
  for (const auto& m : report.methods) diag += fmt::format(",{}_kkt,{}_shorts", m.spec.slug(), m.spec.slug());
  diag += "\n";
  for (std::size_t r = 0; r < report.rebalances.size(); ++r) {
    diag += format_date(report.rebalances[r].date);
    for (const auto& m : report.methods) {
      diag += fmt::format(",{},{}", format_number(m.kkt_residuals[r]), m.target_shorts[r]);
    }
    diag += "\n";
  }
  write_text(dir / "diagnostics.csv", diag);
}

std::vector<MethodSeries> read_daily_returns(const fs::path& dir) {
  const Panel p = wide_panel(read_csv(dir / "daily_returns.csv"), "daily returns");
  std::vector<MethodSeries> out;
  for (std::size_t m = 0; m < p.ids.size(); ++m) {
    out.push_back({p.ids[m], p.dates, p.values.row(static_cast<Index>(m)).transpose()});
  }
  return out;
}

namespace {

std::string sweep_csv(const SweepTable& table, const std::string& header,
                      const std::function<std::string(const SweepRow&)>& fields) {
  std::string out = "covariance,a," + header + "\n";
  for (const auto& row : table.rows) {
    const char* mode = row.covariance == CovarianceMode::raw ? "raw" : "cross_validated";
    out += fmt::format("{},{},{}\n", mode, format_number(row.a), fields(row));
  }
  return out;
}

}  // namespace

std::string sweep_csv_vol_beta_corr(const SweepTable& table) {
  return sweep_csv(table, "volatility,beta,correlation", [](const SweepRow& r) {
    return fmt::format("{},{},{}", format_number(r.volatility), format_number(r.beta), format_number(r.correlation));
  });
}

std::string sweep_csv_shorts(const SweepTable& table) {
  const double n = static_cast<double>(table.sample_size);
  return sweep_csv(table, "short_count,short_fraction", [n](const SweepRow& r) {
    return fmt::format("{},{}", format_number(r.short_count), format_number(r.short_count / n));
  });
}

std::string sweep_csv_neff(const SweepTable& table) {
  return sweep_csv(table, "n_eff,n_positions", [](const SweepRow& r) {
    return fmt::format("{},{}", format_number(r.n_eff), format_number(r.n_positions));
  });
}

std::string sweep_csv_gamma(const SweepTable& table) {
  return sweep_csv(table, "gamma,gamma_drift", [](const SweepRow& r) {
    return fmt::format("{},{}", format_number(r.gamma), format_number(r.gamma_drift));
  });
}

std::string projection_csv(const ProjectionTable& table) {
  std::string out = "k,mean_lambda,mean_log_lambda,mean_p_res,mean_log_p_res,random_level,one_sigma_level\n";
  for (const auto& r : table.rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.k, format_number(r.mean_lambda), format_number(r.mean_log_lambda),
                       format_number(r.mean_p_res), format_number(r.mean_log_p_res), format_number(table.random_level),
                       format_number(table.one_sigma_level));
  }
  return out;
}

Json projection_summary_json(const ProjectionTable& table) {
  Json j;
  j["n"] = table.n;
  j["random_level"] = table.random_level;
  j["one_sigma_level"] = table.one_sigma_level;
  j["k_star"] = table.k_star;
  j["samples_used"] = table.samples_used;
  j["samples_skipped"] = table.samples_skipped;
  return j;
}

std::string exposures_csv(const std::string& zone, const std::vector<ExposureRow>& rows) {
  std::string out = "zone,quantity";
  for (const auto& r : rows) out += "," + r.method;
  out += "\n";
  const std::pair<const char*, double ExposureRow::*> quantities[] = {
      {"rho_LV", &ExposureRow::rho_low_vol},
      {"rho*_LV", &ExposureRow::rho_star_low_vol},
      {"rho_Lb", &ExposureRow::rho_low_beta},
      {"rho*_Lb", &ExposureRow::rho_star_low_beta},
  };
  for (const auto& [label, field] : quantities) {
    out += zone + "," + label;
    for (const auto& r : rows) out += "," + format_number(r.*field);
    out += "\n";
  }
  std::string degenerate = zone + ",residual_degenerate";
  for (const auto& r : rows) degenerate += r.residual_degenerate ? ",1" : ",0";
  return out + degenerate + "\n";
}

std::map<std::string, ConfigValue> parse_config(const std::string& text) {
  std::map<std::string, ConfigValue> out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (line[k] == '"') quoted = !quoted;
      if (line[k] == '#' && !quoted) {
        line.resize(k);
        break;
      }
    }
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw Error(ErrorKind::invalid_input, fmt::format("config line {}: bad section", line_no));
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::invalid_input, fmt::format("config line {}: expected key = value", line_no));
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw Error(ErrorKind::invalid_input, fmt::format("config line {}: empty key or value", line_no));
    }
    ConfigValue v;
    if (value.front() == '[') {
      if (value.back() != ']') throw Error(ErrorKind::invalid_input, fmt::format("config line {}: unterminated array", line_no));
      const std::string body = trim(value.substr(1, value.size() - 2));
      if (!body.empty()) {
        for (const auto& item : split(body, ',')) {
          if (!item.empty()) v.push_back(unquote(item));
        }
      }
    } else {
      v.push_back(unquote(value));
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) throw Error(ErrorKind::invalid_input, fmt::format("config line {}: duplicate key {}", line_no, full));
    out[full] = std::move(v);
  }
  return out;
}

namespace {

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, ConfigValue> values) : values_(std::move(values)) {}

  const std::string* scalar(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    if (it->second.size() != 1) throw Error(ErrorKind::invalid_input, fmt::format("config key {} expects one value", key));
    return &it->second.front();
  }
  const ConfigValue* list(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }
  template <class T>
  void number(const std::string& key, T& target) {
    if (const auto* s = scalar(key)) {
      const double v = parse_number(*s);
      if (is_missing(v)) throw Error(ErrorKind::invalid_input, fmt::format("config key {} is not a number", key));
      if constexpr (std::is_integral_v<T>) {
        if (v < 0.0 && std::is_unsigned_v<T>) throw Error(ErrorKind::invalid_input, fmt::format("config key {} must be >= 0", key));
        target = static_cast<T>(v);
      } else {
        target = v;
      }
    }
  }
  void boolean(const std::string& key, bool& target) {
    if (const auto* s = scalar(key)) {
      if (*s == "true") target = true;
      else if (*s == "false") target = false;
      else throw Error(ErrorKind::invalid_input, fmt::format("config key {} must be true or false", key));
    }
  }
  void finish() const {
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) throw Error(ErrorKind::invalid_input, fmt::format("unknown config key {}", k));
    }
  }

 private:
  std::map<std::string, ConfigValue> values_;
  std::set<std::string> used_;
};

}  // namespace

BacktestJob backtest_job_from_config(const std::string& text, const fs::path& base_dir) {
  ConfigReader r(parse_config(text));
  BacktestJob job;
  const auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  const std::string* prices = r.scalar("prices");
  if (!prices) throw Error(ErrorKind::invalid_input, "config needs a 'prices' file");
  job.prices = resolve(*prices);
  if (const auto* caps = r.scalar("caps")) job.caps = resolve(*caps);

  BacktestConfig& c = job.config;
  r.number("lookback_days", c.lookback_days);
  r.number("lag_days", c.lag_days);
  r.number("rebalance_months", c.rebalance_months);
  if (const auto* methods = r.list("methods")) {
    c.methods.clear();
    for (const auto& m : *methods) c.methods.push_back(TargetSpec::parse(m));
  }
  if (const auto* s = r.scalar("covariance")) {
    if (*s == "raw") c.covariance = CovarianceMode::raw;
    else if (*s == "cross_validated" || *s == "cv") c.covariance = CovarianceMode::cross_validated;
    else throw Error(ErrorKind::invalid_input, fmt::format("unknown covariance mode '{}'", *s));
  }
  if (const auto* s = r.scalar("frequency")) c.frequency = parse_frequency(*s);
  if (const auto* s = r.scalar("z_mode")) c.z_mode = parse_compounding_mean(*s);
  r.number("risk_free_daily", c.risk_free_daily);
  if (const auto* s = r.scalar("start")) c.start = parse_date(*s);
  double k_star_fraction = kMissing;
  r.number("k_star_fraction", k_star_fraction);
  if (!is_missing(k_star_fraction)) {
    for (auto& m : c.methods) {
      if (m.kind == TargetKind::sparse_aap) m.k_star_fraction = k_star_fraction;
    }
  }

  r.number("optimizer.position_cap", c.optimizer.position_cap);
  r.number("optimizer.kkt_tolerance", c.optimizer.kkt_tolerance);
  r.number("optimizer.max_iterations", c.optimizer.max_iterations);
  if (const auto* s = r.scalar("optimizer.algorithm")) c.optimizer.algorithm = parse_solver_algorithm(*s);

  r.number("cleaning.folds", c.cleaning.n_folds);
  r.number("cleaning.holdout_fraction", c.cleaning.holdout_fraction);
  r.number("cleaning.seed", c.cleaning.seed);
  r.boolean("cleaning.isotonic", c.cleaning.isotonic);
  r.boolean("cleaning.preserve_trace", c.cleaning.preserve_trace);
  r.boolean("cleaning.standardize", c.cleaning.standardize);

  r.number("pool.pool_size", c.pool.pool_size);
  r.number("pool.min_coverage_fraction", c.pool.min_coverage_fraction);
  r.number("pool.liquidity_window_days", c.pool.liquidity_window_days);
  r.number("pool.refresh_months", c.pool.refresh_months);
  r.number("pool.min_pool_size", c.pool.min_pool_size);
  r.finish();
  c.validate();
  return job;
}

}  // namespace agal::io
