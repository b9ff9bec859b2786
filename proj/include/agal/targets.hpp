#pragma once

#include <string>

#include "agal/common.hpp"
#include "agal/spectrum.hpp"

namespace agal {

enum class TargetKind { continuum, market_cap, equal_weight, equal_vol, mvp, mdp, erc, aap, sparse_aap };

/// A target-portfolio recipe: a point (a, b, c) of the continuum or a named method.
struct TargetSpec {
  TargetKind kind = TargetKind::aap;
  double a = 0.5;
  double b = 0.0;
  double c = 0.0;
  double k_star_fraction = 0.05;

  static TargetSpec continuum(double a, double b, double c);
  static TargetSpec named(TargetKind kind);
  static TargetSpec sparse_aap(double k_star_fraction = 0.05);

  /// Accepts aap, s-aap/sparse-aap, mvp, mdp, erc, mc, 1/n/ew, ev, continuum.
  static TargetSpec parse(const std::string& text);

  /// Display name (AAP, S-AAP, MDP, MVP, 1/N, MC, EV, ERC, or continuum(a,b,c)).
  std::string name() const;
  /// Short identifier suitable for file names.
  std::string slug() const;

  void validate() const;
};

struct TargetPortfolio {
  Vector weights;  ///< sums to 1; may contain negative entries
  double omega = 1.0;
  TargetSpec spec;
  /// lambda_k (u_k . w)^2 per eigenmode; sums to w'Cw.
  Vector risk_contributions;
};

/// w proportional to C^-a diag(sigma)^b diag(caps)^c 1, normalized to unit net exposure.
TargetPortfolio continuum_target(const SpectralCovariance& cov, const Vector& sigma, const Vector& caps, double a,
                                 double b, double c);

/// Named methods dispatch onto the continuum; ERC and sparse AAP use their own solvers.
TargetPortfolio named_target(const TargetSpec& spec, const SpectralCovariance& cov, const Vector& sigma,
                             const Vector& caps);

/// General-predictor hook: omega * C^-a p. With a = 1/2 this is the eigen-risk-parity
/// target for an identity predictor covariance.
TargetPortfolio predictor_target(const SpectralCovariance& cov, const Vector& predictor, double a);

struct ErcOptions {
  double tolerance = 1e-10;
  int max_sweeps = 10000;
};

/// Long-only, fully-invested weights with equal Euler risk contributions w_i (Cw)_i.
Vector erc_weights(const SpectralCovariance& cov, const ErcOptions& options = {});

/// lambda_k (u_k . w)^2 for each mode k.
Vector mode_risk_decomposition(const Vector& weights, const SpectralCovariance& cov);

/// P_res(k) = (1_res . u_k)^2 where 1_res is the unit residual of 1 off the top mode.
/// Entry 0 (the top mode) is zero.
Vector residual_projection(const SpectralCovariance& cov);

/// Number of retained modes: ceil(fraction * n), at least 1.
Index k_star(Index n, double fraction);

/// omega * sum_{k <= k*} (1 . u_k) u_k / sqrt(lambda_k).
TargetPortfolio sparse_aap_target(const SpectralCovariance& cov, double k_star_fraction);

/// Two unit-variance assets with correlation rho and predictor (1, 0): share of the variance of
/// the C^{-a} p portfolio carried by the spread mode (1, -1)/sqrt(2).
double two_asset_spread_share(double rho, double a);

}  // namespace agal
