#pragma once

#include <string_view>
#include <vector>

#include "agal/common.hpp"
#include "agal/spectrum.hpp"
#include "agal/targets.hpp"

namespace agal {

enum class SolverAlgorithm { projected_gradient, active_set };

std::string_view to_string(SolverAlgorithm algorithm);
SolverAlgorithm parse_solver_algorithm(std::string_view text);

struct OptimizerConfig {
  /// Largest weight as a fraction of gross exposure.
  double position_cap = 0.03;
  double kkt_tolerance = 1e-8;
  long max_iterations = 50000;
  SolverAlgorithm algorithm = SolverAlgorithm::projected_gradient;

  void validate() const;
};

struct ConstrainedPortfolio {
  Vector weights;      ///< long-only, sums to 1
  Vector raw_weights;  ///< solution of the homogeneous problem before rescaling
  double gross = 0.0;  ///< sum of raw weights
  double objective_value = 0.0;  ///< (raw - target)' C (raw - target)
  double kkt_residual = 0.0;
  long iterations_used = 0;
  std::vector<Index> lower_binding;
  std::vector<Index> upper_binding;
  /// Objective of each accepted iterate.
  std::vector<double> objective_trace;
};

/// min (w - t)' C (w - t) over w >= 0, w_i <= cap * sum(w), then rescaled to sum 1.
ConstrainedPortfolio solve_tracking(const SpectralCovariance& cov, const TargetPortfolio& target,
                                    const OptimizerConfig& cfg);
ConstrainedPortfolio solve_tracking(const SpectralCovariance& cov, const Vector& target, const OptimizerConfig& cfg);

/// Euclidean projection onto {w >= 0, w_i <= cap * sum(w)}.
Vector project_onto_cap_cone(const Vector& v, double cap);

/// Scaled projected-gradient residual ||w - P(w - C(w - t) / lambda_1)||_inf / ||w||_inf.
double kkt_residual(const SpectralCovariance& cov, const Vector& target, const Vector& w, double cap);

struct KktReport {
  /// Ray scaling s applied to the candidate before testing (optimal along the ray).
  double scale = 1.0;
  double stationarity = 0.0;
  /// Most negative multiplier estimate, relative to the gradient scale (0 if none).
  double dual_violation = 0.0;
  /// Largest |multiplier * slack| over the identified binding sets, relative.
  double complementarity = 0.0;
  /// Largest constraint violation relative to gross exposure.
  double feasibility_violation = 0.0;
  Vector lower_slack;  ///< w_i
  Vector upper_slack;  ///< cap * sum(w) - w_i
  bool feasible = true;
  /// max(stationarity, feasibility_violation).
  double residual = 0.0;
};

/// Diagnostic certificate for a candidate solution. Never throws on infeasible candidates.
KktReport verify_kkt(const SpectralCovariance& cov, const Vector& target, const Vector& candidate,
                     const OptimizerConfig& cfg);

}  // namespace agal
