#include "agal/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "agal/backtest.hpp"
#include "agal/error.hpp"
#include "agal/explore.hpp"
#include "agal/factors.hpp"
#include "agal/io.hpp"
#include "agal/parallel.hpp"
#include "agal/random.hpp"

namespace agal::cli {

namespace fs = std::filesystem;
using io::Json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_input, fmt::format("cannot open {}", path.string()));
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", md[k]);
  return hex;
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  Json j;
  j["tool"] = "agal";
  j["version"] = kVersion;
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["config"] = m.config;
  Json inputs = Json::array();
  for (const auto& p : m.input_paths) inputs.push_back({{"path", p}, {"sha256", sha256_file(p)}});
  j["inputs"] = inputs;
  Json outputs = Json::array();
  for (const auto& f : m.output_files) outputs.push_back({{"file", f}, {"sha256", sha256_file(dir / f)}});
  j["outputs"] = outputs;
  if (!m.summary.is_null()) j["summary"] = m.summary;
  if (m.wall_clock) j["wall_clock"] = *m.wall_clock;
  io::write_text(dir / "manifest.json", j.dump(2) + "\n");
}

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int jobs = 0;
  std::string out;
  bool verbose = false;
  bool timestamp = false;
};

int resolve_jobs(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("AGAL_JOBS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return default_jobs();
}

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--jobs", g.jobs, "Worker threads (0: AGAL_JOBS or all cores)");
  app.add_option("--out", g.out, "Output file or directory");
  app.add_flag("--verbose", g.verbose, "Debug logging");
  app.add_flag("--timestamp", g.timestamp, "Record wall-clock time in the manifest");
}

std::optional<std::string> now_string(const Globals& g) {
  if (!g.timestamp) return std::nullopt;
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw Error(ErrorKind::invalid_input, "--out is required");
  return fs::path(g.out);
}

// Directory that holds the manifest for a file output.
fs::path manifest_dir(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

Json cleaning_json(const CleaningConfig& c) {
  return {{"folds", c.n_folds},         {"holdout_fraction", c.holdout_fraction}, {"seed", c.seed},
          {"isotonic", c.isotonic},     {"preserve_trace", c.preserve_trace},     {"standardize", c.standardize}};
}

Json optimizer_json(const OptimizerConfig& c) {
  return {{"position_cap", c.position_cap},
          {"kkt_tolerance", c.kkt_tolerance},
          {"max_iterations", c.max_iterations},
          {"algorithm", std::string(to_string(c.algorithm))}};
}

Json backtest_config_json(const BacktestConfig& c) {
  Json methods = Json::array();
  for (const auto& m : c.methods) methods.push_back(m.name());
  return {{"lookback_days", c.lookback_days},
          {"lag_days", c.lag_days},
          {"rebalance_months", c.rebalance_months},
          {"methods", methods},
          {"covariance", c.covariance == CovarianceMode::raw ? "raw" : "cross_validated"},
          {"frequency", std::string(to_string(c.frequency))},
          {"z_mode", std::string(to_string(c.z_mode))},
          {"risk_free_daily", c.risk_free_daily},
          {"start", c.start ? format_date(*c.start) : std::string()},
          {"optimizer", optimizer_json(c.optimizer)},
          {"cleaning", cleaning_json(c.cleaning)},
          {"pool",
           {{"pool_size", c.pool.pool_size},
            {"min_coverage_fraction", c.pool.min_coverage_fraction},
            {"liquidity_window_days", c.pool.liquidity_window_days},
            {"refresh_months", c.pool.refresh_months},
            {"min_pool_size", c.pool.min_pool_size}}}};
}

Json explore_config_json(const ExploreConfig& c) {
  return {{"n_boot", c.n_boot},
          {"sample_size", c.sample_size},
          {"a_grid", c.a_grid},
          {"window_days", c.window()},
          {"lag_days", c.lag_days},
          {"rebalance_months", c.rebalance_months},
          {"optimizer", optimizer_json(c.optimizer)},
          {"cleaning", cleaning_json(c.cleaning)},
          {"projection_n_boot", c.projection_n_boot},
          {"projection_sample_size", c.projection_sample_size},
          {"projection_window_days", c.projection_window_days}};
}

Json factor_config_json(const FactorConfig& c) {
  return {{"vol_window", c.vol_window},
          {"return_horizon", c.return_horizon},
          {"signal_lag", c.signal_lag},
          {"hedge_beta_window", c.hedge_beta_window},
          {"hedge_lag", c.hedge_lag},
          {"vol_target", c.vol_target},
          {"vol_estimate_window", c.vol_estimate_window},
          {"vol_estimate_lag", c.vol_estimate_lag}};
}

Vector mc_benchmark(const io::ReturnsData& data, const std::string& what) {
  if (!data.caps) {
    throw Error(ErrorKind::invalid_input,
                fmt::format("{} needs market caps (a long price file with a market_cap column)", what));
  }
  return market_cap_index_returns(data.returns, *data.caps);
}

// ---- explore / factors building blocks shared with repro ----

std::vector<std::string> write_explore(const fs::path& dir, const SweepTable& sweep, const ProjectionTable* projection) {
  std::vector<std::string> files = {"fig1_vol_beta_corr.csv", "fig2_shorts.csv", "fig3_neff.csv", "fig4_gamma.csv"};
  io::write_text(dir / files[0], io::sweep_csv_vol_beta_corr(sweep));
  io::write_text(dir / files[1], io::sweep_csv_shorts(sweep));
  io::write_text(dir / files[2], io::sweep_csv_neff(sweep));
  io::write_text(dir / files[3], io::sweep_csv_gamma(sweep));
  if (projection) {
    io::write_text(dir / "fig5_projection.csv", io::projection_csv(*projection));
    io::write_text(dir / "fig5_summary.json", io::projection_summary_json(*projection).dump(2) + "\n");
    files.push_back("fig5_projection.csv");
    files.push_back("fig5_summary.json");
  }
  return files;
}

struct FactorOutputs {
  std::vector<ExposureRow> rows;
  FactorSeries low_vol;
  FactorSeries low_beta;
};

FactorOutputs compute_exposures(const ReturnsPanel& returns, const Vector& mc_daily,
                                const std::vector<MethodSeries>& methods, const FactorConfig& cfg) {
  FactorOutputs out;
  out.low_vol = build_low_risk_factor(returns, mc_daily, FactorKind::low_vol, cfg);
  out.low_beta = build_low_risk_factor(returns, mc_daily, FactorKind::low_beta, cfg);
  const auto mc = std::find_if(methods.begin(), methods.end(), [](const MethodSeries& m) { return m.name == "MC"; });
  if (mc == methods.end()) throw Error(ErrorKind::invalid_input, "backtest report has no MC series");
  std::vector<MethodSeries> others;
  for (const auto& m : methods) {
    if (m.name != "MC") others.push_back(m);
  }
  out.rows = exposure_table(others, *mc, out.low_vol, out.low_beta, cfg);
  return out;
}

std::string factor_series_csv(const FactorOutputs& f) {
  std::string out = "date,low_vol,low_beta\n";
  for (std::size_t t = 0; t < f.low_vol.dates.size(); ++t) {
    out += fmt::format("{},{},{}\n", format_date(f.low_vol.dates[t]), io::format_number(f.low_vol.returns(static_cast<Index>(t))),
                       io::format_number(f.low_beta.returns(static_cast<Index>(t))));
  }
  return out;
}

// ---- subcommands ----

int cmd_data_synth(const Globals& g, std::size_t n, std::size_t t, std::size_t factors) {
  const fs::path dir = require_out(g);
  const SyntheticUniverse u = generate_synthetic_universe(n, t, factors, g.seed);
  io::write_text(dir / "prices.csv", io::prices_long_csv(u.prices, &u.caps));
  io::write_text(dir / "returns.csv", io::returns_wide_csv(compute_returns(u.prices)));
  RunManifest m;
  m.command = "data synth";
  m.seed = g.seed;
  m.config = {{"n_assets", n}, {"n_days", t}, {"n_factors", factors}};
  m.output_files = {"prices.csv", "returns.csv"};
  m.wall_clock = now_string(g);
  write_manifest(dir, m);
  return 0;
}

int cmd_data_ingest(const Globals& g, const std::string& prices, const std::string& caps) {
  const fs::path dir = require_out(g);
  const io::MarketData md =
      io::read_market_data(prices, caps.empty() ? std::nullopt : std::optional<fs::path>(caps));
  const ReturnsPanel r = compute_returns(md.prices);
  io::write_text(dir / "prices.csv", io::prices_long_csv(md.prices, md.caps ? &*md.caps : nullptr));
  io::write_text(dir / "returns.csv", io::returns_wide_csv(r));
  const Index missing = md.prices.prices.unaryExpr([](double x) { return is_missing(x) ? 1.0 : 0.0; }).sum();
  RunManifest m;
  m.command = "data ingest";
  m.seed = g.seed;
  m.input_paths = {prices};
  if (!caps.empty()) m.input_paths.push_back(caps);
  m.output_files = {"prices.csv", "returns.csv"};
  m.summary = {{"n_assets", md.prices.n_assets()},
               {"n_dates", md.prices.n_dates()},
               {"first_date", format_date(md.prices.dates.front())},
               {"last_date", format_date(md.prices.dates.back())},
               {"missing_prices", missing},
               {"has_market_caps", md.caps.has_value()}};
  m.wall_clock = now_string(g);
  write_manifest(dir, m);
  return 0;
}

struct CovArgs {
  std::string input;
  std::size_t window = 1000;
  std::string clean = "cv";
  int folds = 100;
  double holdout = 0.10;
  bool no_normalize = false;
};

int cmd_cov(const Globals& g, const CovArgs& a) {
  const fs::path out = require_out(g);
  const io::ReturnsData data = io::read_returns(a.input);
  const auto n_dates = static_cast<std::size_t>(data.returns.n_dates());
  if (a.window < 2 || a.window > n_dates) {
    throw Error(ErrorKind::invalid_window, fmt::format("window of {} days over {} dates", a.window, n_dates));
  }
  const Window window{n_dates - a.window, n_dates};
  const ReturnsPanel panel = a.no_normalize ? data.returns : cross_sectional_normalize(data.returns);
  SpectralCovariance cov;
  CleaningConfig cc;
  cc.n_folds = a.folds;
  cc.holdout_fraction = a.holdout;
  cc.seed = g.seed;
  cc.jobs = resolve_jobs(g.jobs);
  if (a.clean == "raw") {
    cov = empirical_covariance(panel, window);
  } else if (a.clean == "cv") {
    cov = cross_validated_clean(panel, window, cc);
  } else {
    throw Error(ErrorKind::invalid_input, fmt::format("unknown cleaning '{}' (raw or cv)", a.clean));
  }
  const Json meta = {{"window_days", a.window},
                     {"start_date", format_date(data.returns.dates[window.begin])},
                     {"end_date", format_date(data.returns.dates[window.end - 1])},
                     {"normalized", !a.no_normalize}};
  io::write_text(out, io::covariance_json(cov, data.returns.asset_ids, meta).dump() + "\n");
  RunManifest m;
  m.command = "cov";
  m.seed = g.seed;
  m.config = {{"window", a.window}, {"clean", a.clean}, {"normalize", !a.no_normalize},
              {"cleaning", cleaning_json(cc)}};
  m.input_paths = {a.input};
  m.output_files = {out.filename().string()};
  m.wall_clock = now_string(g);
  write_manifest(manifest_dir(out), m);
  return 0;
}

struct TargetArgs {
  std::string cov;
  std::string spec = "aap";
  double a = 0.5;
  double b = 0.0;
  double c = 0.0;
  double k_star_fraction = 0.05;
  std::string caps;
};

int cmd_target(const Globals& g, const TargetArgs& a) {
  const fs::path out = require_out(g);
  const io::CovarianceFile cf = io::read_covariance(a.cov);
  TargetSpec spec = TargetSpec::parse(a.spec);
  if (spec.kind == TargetKind::continuum) spec = TargetSpec::continuum(a.a, a.b, a.c);
  if (spec.kind == TargetKind::sparse_aap) spec.k_star_fraction = a.k_star_fraction;
  Vector caps;
  const bool needs_caps = spec.kind == TargetKind::market_cap || (spec.kind == TargetKind::continuum && spec.c != 0.0);
  if (needs_caps) {
    if (a.caps.empty()) throw Error(ErrorKind::invalid_input, fmt::format("{} needs --caps", spec.name()));
    caps = io::read_caps_vector(a.caps, cf.asset_ids);
  }
  const TargetPortfolio t = named_target(spec, cf.cov, cf.cov.volatilities(), caps);
  io::write_text(out, io::target_json(t, cf.asset_ids).dump(2) + "\n");
  RunManifest m;
  m.command = "target";
  m.seed = g.seed;
  m.config = {{"spec", spec.name()}, {"a", spec.a}, {"b", spec.b}, {"c", spec.c},
              {"k_star_fraction", spec.k_star_fraction}};
  m.input_paths = {a.cov};
  if (needs_caps) m.input_paths.push_back(a.caps);
  m.output_files = {out.filename().string()};
  m.summary = {{"short_positions", (t.weights.array() < 0.0).count()}, {"omega", t.omega}};
  m.wall_clock = now_string(g);
  write_manifest(manifest_dir(out), m);
  return 0;
}

struct OptimizeArgs {
  std::string cov;
  std::string target;
  double cap = 0.03;
  std::string algorithm = "pg";
  double tolerance = 1e-8;
  long max_iterations = 50000;
};

int cmd_optimize(const Globals& g, const OptimizeArgs& a) {
  const fs::path out = require_out(g);
  const io::CovarianceFile cf = io::read_covariance(a.cov);
  const io::TargetFile tf = io::read_target(a.target);
  if (!tf.asset_ids.empty() && tf.asset_ids != cf.asset_ids) {
    throw Error(ErrorKind::invalid_input, "target assets do not match the covariance assets");
  }
  OptimizerConfig oc;
  oc.position_cap = a.cap;
  oc.kkt_tolerance = a.tolerance;
  oc.max_iterations = a.max_iterations;
  oc.algorithm = parse_solver_algorithm(a.algorithm);
  const ConstrainedPortfolio sol = solve_tracking(cf.cov, tf.weights, oc);
  io::write_text(out, io::weights_csv(cf.asset_ids, sol.weights, tf.weights));
  RunManifest m;
  m.command = "optimize";
  m.seed = g.seed;
  m.config = optimizer_json(oc);
  m.input_paths = {a.cov, a.target};
  m.output_files = {out.filename().string()};
  m.summary = io::solution_json(sol, oc);
  m.wall_clock = now_string(g);
  write_manifest(manifest_dir(out), m);
  return 0;
}

int cmd_backtest(const Globals& g, const std::string& config) {
  const fs::path dir = require_out(g);
  io::BacktestJob job = io::backtest_job_from_config(io::read_text(config), fs::path(config).parent_path());
  job.config.jobs = resolve_jobs(g.jobs);
  const io::MarketData md = io::read_market_data(job.prices, job.caps);
  if (!md.caps) throw Error(ErrorKind::invalid_input, "backtests need market caps");
  const ReturnsPanel r = compute_returns(md.prices);
  const BacktestReport report = run_backtest(r, *md.caps, job.config);
  io::write_backtest_report(dir, report);
  RunManifest m;
  m.command = "backtest";
  m.seed = g.seed;
  m.config = backtest_config_json(job.config);
  m.input_paths = {config, job.prices.string()};
  if (job.caps) m.input_paths.push_back(job.caps->string());
  m.output_files = {"metrics.csv", "metrics.json", "daily_returns.csv", "period_returns.csv", "rebalances.csv",
                    "diagnostics.csv"};
  for (const auto& meth : report.methods) m.output_files.push_back(fmt::format("weights_{}.csv", meth.spec.slug()));
  m.summary = {{"rebalances", report.rebalances.size()}, {"delisting_events", report.delisting_events}};
  m.wall_clock = now_string(g);
  write_manifest(dir, m);
  return 0;
}

struct ExploreArgs {
  std::string input;
  ExploreConfig cfg;
  bool skip_projection = false;
};

int cmd_explore(const Globals& g, ExploreArgs a) {
  const fs::path dir = require_out(g);
  const io::ReturnsData data = io::read_returns(a.input);
  const Vector mc = mc_benchmark(data, "explore");
  a.cfg.seed = g.seed;
  a.cfg.jobs = resolve_jobs(g.jobs);
  const SweepTable sweep = sweep_a(data.returns, mc, a.cfg);
  std::optional<ProjectionTable> projection;
  if (!a.skip_projection) projection = projection_study(data.returns, a.cfg);
  RunManifest m;
  m.command = "explore";
  m.seed = g.seed;
  m.config = explore_config_json(a.cfg);
  m.input_paths = {a.input};
  m.output_files = write_explore(dir, sweep, projection ? &*projection : nullptr);
  m.summary = {{"rebalances", sweep.n_rebalances}};
  if (projection) m.summary["k_star"] = projection->k_star;
  m.wall_clock = now_string(g);
  write_manifest(dir, m);
  return 0;
}

int cmd_factors(const Globals& g, const std::string& returns_path, const std::string& backtest_dir,
                const std::string& zone, FactorConfig cfg) {
  const fs::path out = require_out(g);
  const io::ReturnsData data = io::read_returns(returns_path);
  const Vector mc = mc_benchmark(data, "factors");
  cfg.jobs = resolve_jobs(g.jobs);
  const FactorOutputs f = compute_exposures(data.returns, mc, io::read_daily_returns(backtest_dir), cfg);
  io::write_text(out, io::exposures_csv(zone, f.rows));
  const fs::path dir = manifest_dir(out);
  io::write_text(dir / "factor_returns.csv", factor_series_csv(f));
  RunManifest m;
  m.command = "factors";
  m.seed = g.seed;
  m.config = factor_config_json(cfg);
  m.config["zone"] = zone;
  m.input_paths = {returns_path, (fs::path(backtest_dir) / "daily_returns.csv").string()};
  m.output_files = {out.filename().string(), "factor_returns.csv"};
  m.wall_clock = now_string(g);
  write_manifest(dir, m);
  return 0;
}

struct ReproArgs {
  int folds = 20;
  std::size_t n_boot = 5;
  std::size_t sweep_universe = 400;
  std::size_t sweep_days = 1300;
  std::size_t projection_universe = 600;
  std::size_t projection_days = 2500;
  std::size_t projection_boot = 20;
  std::size_t sample_size = 250;
  std::size_t projection_size = 500;
  std::size_t backtest_assets = 250;
  std::size_t backtest_days = 1600;
  std::size_t backtest_lookback = 1000;
};

int cmd_repro(const Globals& g, const ReproArgs& a) {
  const fs::path dir = require_out(g);
  const int jobs = resolve_jobs(g.jobs);
  RunManifest m;
  m.command = "repro";
  m.seed = g.seed;

  // Two-asset split of risk between the market and spread modes.
  std::string split = "rho,markowitz_spread_share,aap_spread_share\n";
  for (const double rho : {-0.5, 0.0, 0.3, 0.9}) {
    split += fmt::format("{},{},{}\n", io::format_number(rho), io::format_number(two_asset_spread_share(rho, 1.0)),
                         io::format_number(two_asset_spread_share(rho, 0.5)));
  }
  io::write_text(dir / "two_asset_split.csv", split);
  m.output_files.push_back("two_asset_split.csv");

  // Figures 1-4: continuum sweep on a synthetic universe.
  const SyntheticUniverse su = generate_synthetic_universe(a.sweep_universe, a.sweep_days, 10, mix_seed(g.seed, 1));
  const ReturnsPanel sr = compute_returns(su.prices);
  ExploreConfig ec;
  ec.n_boot = a.n_boot;
  ec.cleaning.n_folds = a.folds;
  ec.seed = g.seed;
  ec.jobs = jobs;
  ec.projection_n_boot = a.projection_boot;
  ec.sample_size = a.sample_size;
  ec.projection_sample_size = a.projection_size;
  const SweepTable sweep = sweep_a(sr, market_cap_index_returns(sr, su.caps), ec);

  // Figure 5: projection study with 25 planted sector factors.
  const SyntheticUniverse pu =
      generate_synthetic_universe(a.projection_universe, a.projection_days, 26, mix_seed(g.seed, 2));
  const ProjectionTable projection = projection_study(compute_returns(pu.prices), ec);
  for (const auto& f : write_explore(dir, sweep, &projection)) m.output_files.push_back(f);

  // Cleaning: raw versus cross-validated eigenvalues of one window.
  {
    CleaningConfig cc;
    cc.n_folds = a.folds;
    cc.seed = mix_seed(g.seed, 3);
    cc.jobs = jobs;
    const ReturnsPanel np = cross_sectional_normalize(sr.select_assets(complete_history_assets(sr)));
    const std::size_t w = std::min<std::size_t>(2 * a.backtest_assets, static_cast<std::size_t>(np.n_dates()));
    CleaningDiagnostics diag;
    cross_validated_clean(np, Window{static_cast<std::size_t>(np.n_dates()) - w, static_cast<std::size_t>(np.n_dates())},
                          cc, &diag);
    std::string out = "k,in_sample,cross_validated,cleaned\n";
    for (Index k = 0; k < diag.full_sample.size(); ++k) {
      out += fmt::format("{},{},{},{}\n", k + 1, io::format_number(diag.full_sample(k)),
                         io::format_number(diag.cross_validated(k)), io::format_number(diag.cleaned(k)));
    }
    io::write_text(dir / "fig6_cleaning.csv", out);
    m.output_files.push_back("fig6_cleaning.csv");
  }

  // Table 1 analogue and factor exposures.
  const SyntheticUniverse bu = generate_synthetic_universe(a.backtest_assets, a.backtest_days, 10, mix_seed(g.seed, 4));
  const ReturnsPanel br = compute_returns(bu.prices);
  BacktestConfig bc;
  bc.cleaning.n_folds = a.folds;
  bc.lookback_days = a.backtest_lookback;
  bc.cleaning.seed = mix_seed(g.seed, 5);
  bc.jobs = jobs;
  const BacktestReport report = run_backtest(br, bu.caps, bc);
  io::write_backtest_report(dir / "backtest", report);
  m.output_files.push_back("backtest/metrics.csv");
  m.output_files.push_back("backtest/daily_returns.csv");

  std::vector<MethodSeries> series;
  for (const auto& meth : report.methods) series.push_back({meth.spec.name(), meth.daily_dates, meth.daily_returns});
  FactorConfig fc;
  fc.jobs = jobs;
  const FactorOutputs f = compute_exposures(br, market_cap_index_returns(br, bu.caps), series, fc);
  io::write_text(dir / "table7_exposures.csv", io::exposures_csv("SYN", f.rows));
  io::write_text(dir / "factor_returns.csv", factor_series_csv(f));
  m.output_files.push_back("table7_exposures.csv");
  m.output_files.push_back("factor_returns.csv");

  m.config = {{"folds", a.folds},
              {"n_boot", a.n_boot},
              {"sweep_universe", a.sweep_universe},
              {"sweep_days", a.sweep_days},
              {"projection_universe", a.projection_universe},
              {"projection_days", a.projection_days},
              {"projection_boot", a.projection_boot},
              {"sample_size", a.sample_size},
              {"projection_size", a.projection_size},
              {"backtest_assets", a.backtest_assets},
              {"backtest_days", a.backtest_days},
              {"backtest_lookback", a.backtest_lookback},
              {"explore", explore_config_json(ec)},
              {"backtest", backtest_config_json(bc)},
              {"factors", factor_config_json(fc)}};
  m.summary = {{"k_star", projection.k_star}, {"sweep_rebalances", sweep.n_rebalances},
               {"backtest_rebalances", report.rebalances.size()}};
  m.wall_clock = now_string(g);
  write_manifest(dir, m);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Risk-based and agnostic allocation portfolios", "agal"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Globals g;
  add_globals(app, g);

  // Each leaf command repeats the global flags so its help lists them.
  const auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& desc) {
    CLI::App* sub = parent->add_subcommand(name, desc);
    add_globals(*sub, g);
    return sub;
  };

  CLI::App* data = app.add_subcommand("data", "Ingest or synthesize price data");
  data->require_subcommand(1);
  std::string ingest_prices;
  std::string ingest_caps;
  CLI::App* ingest = leaf(data, "ingest", "Validate a price file and write prices/returns");
  ingest->add_option("--prices", ingest_prices, "Price file (long or wide CSV)")->required();
  ingest->add_option("--caps", ingest_caps, "Market cap file (long or wide CSV)");
  std::size_t synth_n = 250;
  std::size_t synth_t = 3500;
  std::size_t synth_factors = 10;
  CLI::App* synth = leaf(data, "synth", "Generate a synthetic factor-model universe");
  synth->add_option("--n", synth_n, "Number of assets");
  synth->add_option("--t", synth_t, "Number of trading days");
  synth->add_option("--factors", synth_factors, "Market plus sector factors");

  CovArgs cov_args;
  CLI::App* cov = leaf(&app, "cov", "Estimate a (cleaned) covariance matrix");
  cov->add_option("--input", cov_args.input, "Returns file (wide CSV) or long price file")->required();
  cov->add_option("--window", cov_args.window, "Trailing window in days");
  cov->add_option("--clean", cov_args.clean, "raw or cv")->check(CLI::IsMember({"raw", "cv"}));
  cov->add_option("--folds", cov_args.folds, "Cross-validation folds");
  cov->add_option("--holdout", cov_args.holdout, "Out-of-sample fraction per fold");
  cov->add_flag("--no-normalize", cov_args.no_normalize, "Skip cross-sectional normalization");

  TargetArgs target_args;
  CLI::App* target = leaf(&app, "target", "Build a target portfolio");
  target->add_option("--cov", target_args.cov, "Covariance JSON")->required();
  target->add_option("--spec", target_args.spec, "aap|s-aap|mvp|mdp|erc|mc|1/n|ev|continuum");
  target->add_option("--a", target_args.a, "Covariance exponent (continuum)");
  target->add_option("--b", target_args.b, "Volatility exponent (continuum)");
  target->add_option("--c", target_args.c, "Market-cap exponent (continuum)");
  target->add_option("--k-star-fraction", target_args.k_star_fraction, "Retained mode fraction (s-aap)");
  target->add_option("--caps", target_args.caps, "Market caps CSV");

  OptimizeArgs opt_args;
  CLI::App* optimize = leaf(&app, "optimize", "Long-only tracking of a target portfolio");
  optimize->add_option("--cov", opt_args.cov, "Covariance JSON")->required();
  optimize->add_option("--target", opt_args.target, "Target JSON")->required();
  optimize->add_option("--cap", opt_args.cap, "Position cap as a fraction of gross");
  optimize->add_option("--algorithm", opt_args.algorithm, "pg or as")->check(CLI::IsMember({"pg", "as", "projected_gradient", "active_set"}));
  optimize->add_option("--tol", opt_args.tolerance, "KKT tolerance");
  optimize->add_option("--max-iter", opt_args.max_iterations, "Iteration budget");

  std::string bt_config;
  CLI::App* backtest = leaf(&app, "backtest", "Run a rebalancing backtest from a config file");
  backtest->add_option("--config", bt_config, "Backtest config (TOML)")->required();

  ExploreArgs ex_args;
  double ex_cap = ex_args.cfg.optimizer.position_cap;
  CLI::App* explore = leaf(&app, "explore", "Bootstrap study over the continuum and eigenmode projections");
  explore->add_option("--input", ex_args.input, "Long price file with market caps")->required();
  explore->add_option("--n-boot", ex_args.cfg.n_boot, "Bootstrap samples");
  explore->add_option("--sample-size", ex_args.cfg.sample_size, "Assets per sample");
  explore->add_option("--window", ex_args.cfg.window_days, "Covariance window (0: 2 x sample size)");
  explore->add_option("--lag", ex_args.cfg.lag_days, "Lag between window end and rebalance");
  explore->add_option("--rebalance-months", ex_args.cfg.rebalance_months, "Months between rebalances");
  explore->add_option("--folds", ex_args.cfg.cleaning.n_folds, "Cross-validation folds");
  explore->add_option("--cap", ex_cap, "Position cap of the long-only solve");
  explore->add_option("--projection-boot", ex_args.cfg.projection_n_boot, "Projection samples");
  explore->add_option("--projection-size", ex_args.cfg.projection_sample_size, "Assets per projection sample");
  explore->add_option("--projection-window", ex_args.cfg.projection_window_days, "Projection window (0: all dates)");
  explore->add_flag("--skip-projection", ex_args.skip_projection, "Only run the continuum sweep");

  std::string fa_returns;
  std::string fa_backtest;
  std::string fa_zone = "SYN";
  FactorConfig fa_cfg;
  CLI::App* factors = leaf(&app, "factors", "Low-vol and low-beta factor exposures of backtested methods");
  factors->add_option("--returns", fa_returns, "Long price file with market caps")->required();
  factors->add_option("--backtest", fa_backtest, "Backtest report directory")->required();
  factors->add_option("--zone", fa_zone, "Zone label for the table");
  factors->add_option("--vol-window", fa_cfg.vol_window, "Window for sigma and beta");
  factors->add_option("--horizon", fa_cfg.return_horizon, "Return horizon in days");
  factors->add_option("--signal-lag", fa_cfg.signal_lag, "Signal lag in days");
  factors->add_option("--hedge-window", fa_cfg.hedge_beta_window, "Hedge beta window");
  factors->add_option("--hedge-lag", fa_cfg.hedge_lag, "Hedge beta lag");
  factors->add_option("--vol-target", fa_cfg.vol_target, "Annualized vol target");
  factors->add_option("--vol-estimate-window", fa_cfg.vol_estimate_window, "Vol estimate window");
  factors->add_option("--vol-estimate-lag", fa_cfg.vol_estimate_lag, "Vol estimate lag");

  ReproArgs re_args;
  CLI::App* repro = leaf(&app, "repro", "Regenerate every figure and table dataset on synthetic data");
  repro->add_option("--folds", re_args.folds, "Cross-validation folds");
  repro->add_option("--n-boot", re_args.n_boot, "Bootstrap samples of the continuum sweep");
  repro->add_option("--sweep-universe", re_args.sweep_universe, "Assets in the sweep universe");
  repro->add_option("--sweep-days", re_args.sweep_days, "Days in the sweep universe");
  repro->add_option("--projection-universe", re_args.projection_universe, "Assets in the projection universe");
  repro->add_option("--projection-days", re_args.projection_days, "Days in the projection universe");
  repro->add_option("--projection-boot", re_args.projection_boot, "Projection samples");
  repro->add_option("--sample-size", re_args.sample_size, "Assets per sweep sample");
  repro->add_option("--projection-size", re_args.projection_size, "Assets per projection sample");
  repro->add_option("--backtest-assets", re_args.backtest_assets, "Assets in the backtest universe");
  repro->add_option("--backtest-days", re_args.backtest_days, "Days in the backtest universe");
  repro->add_option("--backtest-lookback", re_args.backtest_lookback, "Backtest covariance lookback");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);
  try {
    if (*ingest) return cmd_data_ingest(g, ingest_prices, ingest_caps);
    if (*synth) return cmd_data_synth(g, synth_n, synth_t, synth_factors);
    if (*cov) return cmd_cov(g, cov_args);
    if (*target) return cmd_target(g, target_args);
    if (*optimize) return cmd_optimize(g, opt_args);
    if (*backtest) return cmd_backtest(g, bt_config);
    if (*explore) {
      ex_args.cfg.optimizer.position_cap = ex_cap;
      return cmd_explore(g, ex_args);
    }
    if (*factors) return cmd_factors(g, fa_returns, fa_backtest, fa_zone, fa_cfg);
    if (*repro) return cmd_repro(g, re_args);
  } catch (const Error& e) {
    std::cerr << fmt::format("agal: {}\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << fmt::format("agal: {}\n", e.what());
    return 1;
  }
  return 2;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"agal"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace agal::cli
