#include "agal/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>

#include <fmt/format.h>

#include "agal/error.hpp"

namespace agal {

TargetSpec TargetSpec::continuum(double a, double b, double c) {
  TargetSpec s;
  s.kind = TargetKind::continuum;
  s.a = a;
  s.b = b;
  s.c = c;
  return s;
}

TargetSpec TargetSpec::named(TargetKind kind) {
  TargetSpec s;
  s.kind = kind;
  s.a = 0.0;
  s.b = 0.0;
  s.c = 0.0;
  switch (kind) {
    case TargetKind::market_cap: s.c = 1.0; break;
    case TargetKind::equal_vol: s.b = -1.0; break;
    case TargetKind::mvp: s.a = 1.0; break;
    case TargetKind::mdp: s.a = 1.0; s.b = 1.0; break;
    case TargetKind::aap:
    case TargetKind::sparse_aap: s.a = 0.5; break;
    default: break;
  }
  return s;
}

TargetSpec TargetSpec::sparse_aap(double k_star_fraction) {
  TargetSpec s = named(TargetKind::sparse_aap);
  s.k_star_fraction = k_star_fraction;
  return s;
}

TargetSpec TargetSpec::parse(const std::string& text) {
  std::string key;
  for (const char ch : text) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (key == "aap") return named(TargetKind::aap);
  if (key == "sparse-aap" || key == "s-aap" || key == "saap" || key == "sparse_aap") return sparse_aap();
  if (key == "mvp") return named(TargetKind::mvp);
  if (key == "mdp") return named(TargetKind::mdp);
  if (key == "erc") return named(TargetKind::erc);
  if (key == "mc" || key == "market-cap" || key == "market_cap") return named(TargetKind::market_cap);
  if (key == "1/n" || key == "ew" || key == "equal-weight" || key == "equal_weight") {
    return named(TargetKind::equal_weight);
  }
  if (key == "ev" || key == "equal-vol" || key == "equal_vol") return named(TargetKind::equal_vol);
  if (key == "continuum") return continuum(0.5, 0.0, 0.0);
  throw Error(ErrorKind::invalid_input, fmt::format("unknown target spec '{}'", text));
}

std::string TargetSpec::name() const {
  switch (kind) {
    case TargetKind::aap: return "AAP";
    case TargetKind::sparse_aap: return "S-AAP";
    case TargetKind::mdp: return "MDP";
    case TargetKind::mvp: return "MVP";
    case TargetKind::equal_weight: return "1/N";
    case TargetKind::market_cap: return "MC";
    case TargetKind::equal_vol: return "EV";
    case TargetKind::erc: return "ERC";
    case TargetKind::continuum: return fmt::format("continuum({:g},{:g},{:g})", a, b, c);
  }
  return "?";
}

std::string TargetSpec::slug() const {
  switch (kind) {
    case TargetKind::aap: return "aap";
    case TargetKind::sparse_aap: return "s-aap";
    case TargetKind::mdp: return "mdp";
    case TargetKind::mvp: return "mvp";
    case TargetKind::equal_weight: return "ew";
    case TargetKind::market_cap: return "mc";
    case TargetKind::equal_vol: return "ev";
    case TargetKind::erc: return "erc";
    case TargetKind::continuum: return fmt::format("continuum_a{:g}_b{:g}_c{:g}", a, b, c);
  }
  return "unknown";
}

void TargetSpec::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) {
    throw Error(ErrorKind::invalid_input, "continuum parameters must be finite");
  }
  if (!(k_star_fraction > 0.0 && k_star_fraction <= 1.0)) {
    throw Error(ErrorKind::invalid_input, "k_star_fraction must lie in (0, 1]");
  }
}

namespace {

TargetPortfolio normalize_target(Vector raw, const SpectralCovariance& cov, const TargetSpec& spec) {
  const double net = raw.sum();
  const double gross = raw.cwiseAbs().sum();
  if (!std::isfinite(net) || !(std::abs(net) > 1e-12 * gross) || gross == 0.0) {
    throw Error(ErrorKind::degenerate_scaling,
                fmt::format("{} target has net exposure {:.3e} against gross {:.3e}", spec.name(), net, gross));
  }
  TargetPortfolio t;
  t.omega = 1.0 / net;
  t.weights = raw * t.omega;
  t.spec = spec;
  t.risk_contributions = mode_risk_decomposition(t.weights, cov);
  return t;
}

Vector spectral_apply(const SpectralCovariance& cov, double a, const Vector& p, Index keep) {
  const Matrix& u = cov.eigenvectors();
  Vector coeff = powered_eigenvalues(cov, -a).cwiseProduct(u.transpose() * p);
  if (keep < coeff.size()) coeff.tail(coeff.size() - keep).setZero();
  return u * coeff;
}

}  // namespace

TargetPortfolio continuum_target(const SpectralCovariance& cov, const Vector& sigma, const Vector& caps, double a,
                                 double b, double c) {
  const TargetSpec spec = TargetSpec::continuum(a, b, c);
  spec.validate();
  const Index n = cov.size();
  if (n == 0) throw Error(ErrorKind::invalid_input, "empty covariance");
  Vector p = Vector::Ones(n);
  if (b != 0.0) {
    if (sigma.size() != n || !(sigma.minCoeff() > 0.0)) {
      throw Error(ErrorKind::invalid_input, "volatility exponent needs N strictly positive volatilities");
    }
    p.array() *= sigma.array().pow(b);
  }
  if (c != 0.0) {
    if (caps.size() != n || !caps.allFinite() || !(caps.minCoeff() > 0.0)) {
      throw Error(ErrorKind::invalid_input, "market-cap exponent needs N strictly positive caps");
    }
    p.array() *= caps.array().pow(c);
  }
  // C^0 is the identity; skipping the spectral round trip keeps a = 0 exact.
  Vector raw = a == 0.0 ? p : spectral_apply(cov, a, p, n);
  return normalize_target(std::move(raw), cov, spec);
}

TargetPortfolio predictor_target(const SpectralCovariance& cov, const Vector& predictor, double a) {
  if (predictor.size() != cov.size()) throw Error(ErrorKind::invalid_input, "predictor size mismatch");
  TargetSpec spec = TargetSpec::continuum(a, 0.0, 0.0);
  Vector raw = a == 0.0 ? predictor : spectral_apply(cov, a, predictor, cov.size());
  return normalize_target(std::move(raw), cov, spec);
}

TargetPortfolio named_target(const TargetSpec& spec, const SpectralCovariance& cov, const Vector& sigma,
                             const Vector& caps) {
  spec.validate();
  TargetPortfolio t;
  switch (spec.kind) {
    case TargetKind::erc: {
      t.weights = erc_weights(cov);
      t.omega = 1.0;
      t.risk_contributions = mode_risk_decomposition(t.weights, cov);
      break;
    }
    case TargetKind::sparse_aap:
      t = sparse_aap_target(cov, spec.k_star_fraction);
      break;
    case TargetKind::continuum:
      t = continuum_target(cov, sigma, caps, spec.a, spec.b, spec.c);
      break;
    default: {
      const TargetSpec canonical = TargetSpec::named(spec.kind);
      t = continuum_target(cov, sigma, caps, canonical.a, canonical.b, canonical.c);
      break;
    }
  }
  t.spec = spec;
  return t;
}

Vector erc_weights(const SpectralCovariance& cov, const ErcOptions& options) {
  const Index n = cov.size();
  if (n == 0) throw Error(ErrorKind::invalid_input, "empty covariance");
  if (!(cov.eigenvalues()(n - 1) > 0.0)) {
    throw Error(ErrorKind::singular_matrix, "ERC needs a positive-definite covariance");
  }
  const Matrix& c = cov.matrix();
  const double budget = 1.0 / static_cast<double>(n);
  Vector y = c.diagonal().cwiseSqrt().cwiseInverse();
  y /= y.sum();
  Vector cy = c * y;
  double spread = std::numeric_limits<double>::infinity();
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    // Cyclical coordinate descent on 1/2 y'Cy - b' log y; each coordinate
    // update is the positive root of the 1-D stationarity condition.
    for (Index i = 0; i < n; ++i) {
      const double cii = c(i, i);
      const double off = cy(i) - cii * y(i);
      const double updated = (-off + std::sqrt(off * off + 4.0 * cii * budget)) / (2.0 * cii);
      cy += c.col(i) * (updated - y(i));
      y(i) = updated;
    }
    cy = c * y;
    const Vector rc = y.cwiseProduct(cy);
    const double mean = rc.mean();
    spread = (rc.maxCoeff() - rc.minCoeff()) / mean;
    if (spread <= options.tolerance) return y / y.sum();
  }
  throw ConvergenceError("ERC coordinate descent did not equalize risk contributions", spread, options.max_sweeps);
}

Vector mode_risk_decomposition(const Vector& weights, const SpectralCovariance& cov) {
  if (weights.size() != cov.size()) throw Error(ErrorKind::invalid_input, "weight vector size mismatch");
  const Vector proj = cov.eigenvectors().transpose() * weights;
  return cov.eigenvalues().cwiseProduct(proj.cwiseAbs2());
}

Vector residual_projection(const SpectralCovariance& cov) {
  const Index n = cov.size();
  if (n < 2) throw Error(ErrorKind::invalid_input, "residual projection needs N >= 2");
  const Matrix& u = cov.eigenvectors();
  const Vector ones = Vector::Ones(n);
  Vector res = ones - ones.dot(u.col(0)) * u.col(0);
  const double norm = res.norm();
  if (norm < 1e-12 * std::sqrt(static_cast<double>(n))) {
    throw Error(ErrorKind::degenerate_residual, "the uniform predictor is parallel to the top eigenvector");
  }
  res /= norm;
  Vector p = (u.transpose() * res).cwiseAbs2();
  p(0) = 0.0;
  return p;
}

Index k_star(Index n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::invalid_input, "k_star_fraction must lie in (0, 1]");
  }
  // The small offset keeps exact products such as 0.05 * 500 from rounding up.
  const auto k = static_cast<Index>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::clamp<Index>(k, 1, n);
}

TargetPortfolio sparse_aap_target(const SpectralCovariance& cov, double k_star_fraction) {
  const Index n = cov.size();
  if (n == 0) throw Error(ErrorKind::invalid_input, "empty covariance");
  const Index keep = k_star(n, k_star_fraction);
  if (!(cov.eigenvalues()(keep - 1) > 0.0)) {
    throw Error(ErrorKind::singular_matrix, "sparse AAP needs strictly positive retained eigenvalues");
  }
  Vector raw = spectral_apply(cov, 0.5, Vector::Ones(n), keep);
  return normalize_target(std::move(raw), cov, TargetSpec::sparse_aap(k_star_fraction));
}

double two_asset_spread_share(double rho, double a) {
  if (!(std::abs(rho) < 1.0)) throw Error(ErrorKind::invalid_input, "two-asset correlation must lie in (-1, 1)");
  Matrix c(2, 2);
  c << 1.0, rho, rho, 1.0;
  const SpectralCovariance cov = SpectralCovariance::from_matrix(c);
  const Vector w = predictor_target(cov, (Vector(2) << 1.0, 0.0).finished(), a).weights;
  // The market and spread modes are eigenvectors for every rho, including the degenerate rho = 0.
  const double spread = (w(0) - w(1)) / std::sqrt(2.0);
  return (1.0 - rho) * spread * spread / w.dot(c * w);
}

}  // namespace agal
