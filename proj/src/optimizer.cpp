#include "agal/optimizer.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "agal/error.hpp"

namespace agal {

std::string_view to_string(SolverAlgorithm algorithm) {
  return algorithm == SolverAlgorithm::active_set ? "active_set" : "projected_gradient";
}

SolverAlgorithm parse_solver_algorithm(std::string_view text) {
  if (text == "projected_gradient" || text == "pg") return SolverAlgorithm::projected_gradient;
  if (text == "active_set" || text == "as") return SolverAlgorithm::active_set;
  throw Error(ErrorKind::invalid_input, fmt::format("unknown solver algorithm '{}'", text));
}

void OptimizerConfig::validate() const {
  if (!(position_cap > 0.0 && position_cap <= 1.0)) {
    throw Error(ErrorKind::invalid_input, "position_cap must lie in (0, 1]");
  }
  if (!(kkt_tolerance > 0.0)) throw Error(ErrorKind::invalid_input, "kkt_tolerance must be positive");
  if (max_iterations < 1) throw Error(ErrorKind::invalid_input, "max_iterations must be >= 1");
}

namespace {

constexpr double kFeasTol = 1e-12;

// Cap values at or above one never bind for non-negative weights.
bool cap_binds(double cap) { return cap < 1.0; }

bool nearly_one(double x) { return std::abs(x - 1.0) <= 1e-12; }

void check_feasible_cap(Index n, double cap) {
  if (static_cast<double>(n) * cap < 1.0 - 1e-12) {
    throw Error(ErrorKind::infeasible,
                fmt::format("position cap {:g} is infeasible for {} assets (N * cap < 1)", cap, n));
  }
}

}  // namespace

Vector project_onto_cap_cone(const Vector& v, double cap) {
  const Index n = v.size();
  if (n == 0) return v;
  check_feasible_cap(n, cap);
  if (!cap_binds(cap)) return v.cwiseMax(0.0);
  if (nearly_one(cap * static_cast<double>(n))) {
    return Vector::Constant(n, std::max(v.mean(), 0.0));
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return v(i) > v(j); });
  std::vector<double> s(static_cast<std::size_t>(n));
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
  for (Index k = 0; k < n; ++k) {
    s[k] = v(order[k]);
    prefix[k + 1] = prefix[k] + s[k];
  }
  const double scale = std::max(v.cwiseAbs().maxCoeff(), 1e-300);
  const double tol = 1e-12 * scale;

  // Candidate faces: the m largest entries sit at the cap u, entries m..f-1 are
  // shifted by theta, the rest are zero.
  double best_violation = std::numeric_limits<double>::infinity();
  Index best_m = -1;
  Index best_f = -1;
  double best_u = 0.0;
  double best_theta = 0.0;
  const double inv_cap = 1.0 / cap;
  for (Index m = 0; m < n && static_cast<double>(m) < inv_cap + 1e-9; ++m) {
    const double d = 1.0 - cap * static_cast<double>(m);
    if (std::abs(d) <= 1e-12) {
      // Face where the capped block carries the whole gross exposure.
      const double u = prefix[m] / static_cast<double>(m);
      if (!(u > 0.0)) continue;
      const double lo = std::max(u - s[m - 1], 0.0);
      const double viol = std::max(0.0, lo + s[m]);
      if (viol < best_violation) {
        best_violation = viol;
        best_m = m;
        best_f = m;
        best_u = u;
        best_theta = lo;
      }
      continue;
    }
    if (d < 0.0) break;
    const double pm = prefix[m];
    for (Index f = m + 1; f <= n; ++f) {
      const double q = prefix[f] - pm;
      const double free_count = static_cast<double>(f - m);
      const double denom = d * d + cap * cap * static_cast<double>(m) * free_count;
      const double u = (cap * q * d + cap * cap * free_count * pm) / denom;
      if (!(u > 0.0)) continue;
      const double theta = cap * (pm - static_cast<double>(m) * u) / d;
      double viol = std::max(0.0, -theta);
      if (m > 0) viol = std::max(viol, u - s[m - 1] - theta);
      viol = std::max(viol, s[m] + theta - u);
      viol = std::max(viol, -(s[f - 1] + theta));
      if (f < n) viol = std::max(viol, s[f] + theta);
      if (viol < best_violation) {
        best_violation = viol;
        best_m = m;
        best_f = f;
        best_u = u;
        best_theta = theta;
        if (viol == 0.0) break;
      }
    }
    if (best_violation == 0.0) break;
  }

  Vector w = Vector::Zero(n);
  if (best_m < 0 || best_violation > tol) return w;
  for (Index k = 0; k < best_m; ++k) w(order[k]) = best_u;
  for (Index k = best_m; k < best_f; ++k) w(order[k]) = std::clamp(s[k] + best_theta, 0.0, best_u);
  return w;
}

namespace {

enum : unsigned char { kFree = 0, kLower = 1, kUpper = 2 };

struct Problem {
  const Matrix& c;
  const Vector& t;
  Vector ct;
  double cap;
  double lambda_max;
  Index n;
};

double objective(const Problem& p, const Vector& w) {
  const Vector d = w - p.t;
  return d.dot(p.c * d);
}

double residual_of(const Problem& p, const Vector& w) {
  const double wmax = w.cwiseAbs().maxCoeff();
  if (!(wmax > 0.0)) return std::numeric_limits<double>::infinity();
  const Vector step = w - (p.c * w - p.ct) / p.lambda_max;
  return (w - project_onto_cap_cone(step, p.cap)).cwiseAbs().maxCoeff() / wmax;
}

struct FaceIndex {
  std::vector<Index> free;
  std::vector<Index> upper;
};

FaceIndex face_index(const std::vector<unsigned char>& state) {
  FaceIndex f;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i] == kFree) f.free.push_back(static_cast<Index>(i));
    if (state[i] == kUpper) f.upper.push_back(static_cast<Index>(i));
  }
  return f;
}

Vector solve_reduced(Matrix h, const Vector& rhs, const Matrix& ridge_metric, const Vector& ridge_rhs,
                     double ridge) {
  Eigen::LDLT<Matrix> ldlt(h);
  const Vector diag = ldlt.vectorD();
  const double dmax = diag.cwiseAbs().maxCoeff();
  if (ldlt.info() == Eigen::Success && diag.minCoeff() > 1e-12 * dmax) return ldlt.solve(rhs);
  // Near-singular face: tie-break toward the target.
  h += ridge * ridge_metric;
  ldlt.compute(h);
  return ldlt.solve(rhs + ridge * ridge_rhs);
}

// Minimizer of the objective over the affine hull of the face described by `state`.
Vector face_minimizer(const Problem& p, const std::vector<unsigned char>& state) {
  const FaceIndex face = face_index(state);
  const auto k = static_cast<Index>(face.free.size());
  const auto nu = static_cast<Index>(face.upper.size());
  const double d = 1.0 - p.cap * static_cast<double>(nu);
  const double ridge = 1e-12 * p.lambda_max;
  Vector w = Vector::Zero(p.n);

  if (d > 1e-12) {
    if (k == 0) return w;
    const double beta = p.cap / d;
    Matrix h = p.c(face.free, face.free);
    Vector a = Vector::Zero(k);
    double suu = 0.0;
    double ct_u = 0.0;
    double t_u = 0.0;
    for (const Index u : face.upper) {
      a += p.c(face.free, u);
      suu += p.c(face.upper, u).sum();
      ct_u += p.ct(u);
      t_u += p.t(u);
    }
    const Vector ones = Vector::Ones(k);
    h += beta * (a * ones.transpose() + ones * a.transpose());
    h += (beta * beta * suu) * (ones * ones.transpose());
    Vector rhs = p.ct(face.free) + ones * (beta * ct_u);
    Matrix metric = Matrix::Identity(k, k);
    metric += (beta * beta * static_cast<double>(nu)) * (ones * ones.transpose());
    const Vector metric_rhs = p.t(face.free) + ones * (beta * t_u);
    const Vector x = solve_reduced(std::move(h), rhs, metric, metric_rhs, ridge);
    w(face.free) = x;
    const double u = beta * x.sum();
    for (const Index i : face.upper) w(i) = u;
    return w;
  }

  // Capped block holds the entire gross: free weights must sum to zero.
  const Index cols = (k > 0 ? k - 1 : 0) + 1;
  Matrix z = Matrix::Zero(p.n, cols);
  for (Index j = 0; j + 1 < k; ++j) {
    z(face.free[j], j) = 1.0;
    z(face.free[k - 1], j) = -1.0;
  }
  for (const Index u : face.upper) z(u, cols - 1) = 1.0;
  const Matrix cz = p.c * z;
  Matrix h = z.transpose() * cz;
  const Vector rhs = z.transpose() * p.ct;
  const Vector y = solve_reduced(std::move(h), rhs, z.transpose() * z, z.transpose() * p.t, ridge);
  return z * y;
}

// Snaps `w` onto the face so that binding constraints hold exactly.
void snap_to_face(const Problem& p, const std::vector<unsigned char>& state, Vector& w) {
  const FaceIndex face = face_index(state);
  for (Index i = 0; i < p.n; ++i) {
    if (state[i] == kLower) w(i) = 0.0;
  }
  if (face.upper.empty()) return;
  const double d = 1.0 - p.cap * static_cast<double>(face.upper.size());
  double u = 0.0;
  if (d > 1e-12) {
    double free_sum = 0.0;
    for (const Index i : face.free) free_sum += w(i);
    u = p.cap / d * free_sum;
  } else {
    for (const Index i : face.upper) u += w(i);
    u /= static_cast<double>(face.upper.size());
  }
  for (const Index i : face.upper) w(i) = u;
}

std::vector<unsigned char> identify_face(const Vector& w, double cap) {
  std::vector<unsigned char> state(static_cast<std::size_t>(w.size()), kFree);
  const double gross = w.sum();
  const double limit = cap * gross;
  for (Index i = 0; i < w.size(); ++i) {
    if (w(i) <= 0.0) {
      state[i] = kLower;
    } else if (cap_binds(cap) && gross > 0.0 && w(i) >= limit * (1.0 - 1e-12)) {
      state[i] = kUpper;
    }
  }
  return state;
}

struct Multipliers {
  double theta = 0.0;
  Index worst = -1;
  double worst_value = 0.0;
};

// Multipliers of the working constraints at a face minimizer with gradient g = C(w - t).
Multipliers face_multipliers(const Problem& p, const std::vector<unsigned char>& state, const Vector& g) {
  const FaceIndex face = face_index(state);
  const double d = 1.0 - p.cap * static_cast<double>(face.upper.size());
  Multipliers m;
  if (d > 1e-12) {
    double gu = 0.0;
    for (const Index i : face.upper) gu += g(i);
    m.theta = -p.cap * gu / d;
  } else if (!face.free.empty()) {
    m.theta = g(face.free).mean();
  } else {
    double upper_max = -std::numeric_limits<double>::infinity();
    double lower_min = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < p.n; ++i) {
      if (state[i] == kUpper) upper_max = std::max(upper_max, g(i));
      if (state[i] == kLower) lower_min = std::min(lower_min, g(i));
    }
    m.theta = std::isfinite(lower_min) ? 0.5 * (upper_max + lower_min) : upper_max;
  }
  for (Index i = 0; i < p.n; ++i) {
    double value = 0.0;
    if (state[i] == kLower) value = g(i) - m.theta;
    else if (state[i] == kUpper) value = m.theta - g(i);
    else continue;
    if (value < m.worst_value) {
      m.worst_value = value;
      m.worst = i;
    }
  }
  return m;
}

struct ActiveSetOutcome {
  Vector w;
  long iterations = 0;
  bool converged = false;
};

// Primal active-set method from a feasible point `w` lying on the face `state`.
ActiveSetOutcome active_set(const Problem& p, Vector w, std::vector<unsigned char> state, long max_iterations,
                            std::vector<double>& trace) {
  ActiveSetOutcome out;
  snap_to_face(p, state, w);
  const double tscale = std::max(p.t.cwiseAbs().maxCoeff(), 1e-300);
  for (long it = 1; it <= max_iterations; ++it) {
    out.iterations = it;
    const Vector target_point = face_minimizer(p, state);
    const Vector dir = target_point - w;
    const double gross = w.sum();
    const double dgross = dir.sum();
    double alpha = 1.0;
    Index block = -1;
    unsigned char block_kind = kFree;
    // A further cap constraint can only bind at the origin once c (|U| + 1) > 1.
    const auto n_upper = std::count(state.begin(), state.end(), kUpper);
    const bool upper_admissible =
        cap_binds(p.cap) && p.cap * static_cast<double>(n_upper + 1) <= 1.0 + 1e-12;
    for (Index i = 0; i < p.n; ++i) {
      if (state[i] != kFree) continue;
      if (dir(i) < 0.0) {
        const double a = std::max(w(i), 0.0) / -dir(i);
        if (a < alpha) {
          alpha = a;
          block = i;
          block_kind = kLower;
        }
      }
      if (upper_admissible) {
        const double rate = dir(i) - p.cap * dgross;
        if (rate > 0.0) {
          const double a = std::max(p.cap * gross - w(i), 0.0) / rate;
          if (a < alpha) {
            alpha = a;
            block = i;
            block_kind = kUpper;
          }
        }
      }
    }

    if (block < 0) {
      w = target_point;
      trace.push_back(objective(p, w));
      const Vector g = p.c * w - p.ct;
      const Multipliers m = face_multipliers(p, state, g);
      const double tol = 1e-11 * p.lambda_max * std::max(w.cwiseAbs().maxCoeff(), tscale);
      if (m.worst < 0 || m.worst_value >= -tol) {
        out.w = std::move(w);
        out.converged = true;
        return out;
      }
      state[m.worst] = kFree;
    } else {
      w += alpha * dir;
      state[block] = block_kind;
      snap_to_face(p, state, w);
      trace.push_back(objective(p, w));
    }
  }
  out.w = std::move(w);
  return out;
}

ConstrainedPortfolio finalize(const Problem& p, Vector raw, long iterations, std::vector<double> trace) {
  ConstrainedPortfolio out;
  out.gross = raw.sum();
  if (!(out.gross > 0.0)) {
    throw Error(ErrorKind::degenerate_scaling, "the constrained solution is identically zero; target has no long part");
  }
  out.weights = raw / out.gross;
  out.objective_value = objective(p, raw);
  out.kkt_residual = residual_of(p, raw);
  out.iterations_used = iterations;
  const double limit = p.cap * out.gross;
  for (Index i = 0; i < p.n; ++i) {
    if (raw(i) <= 0.0) out.lower_binding.push_back(i);
    else if (cap_binds(p.cap) && raw(i) >= limit * (1.0 - 1e-10)) out.upper_binding.push_back(i);
  }
  out.raw_weights = std::move(raw);
  out.objective_trace = std::move(trace);
  return out;
}

bool target_feasible(const Vector& t, double cap) {
  if (t.minCoeff() < 0.0) return false;
  const double gross = t.sum();
  return gross > 0.0 && t.maxCoeff() <= cap * gross;
}

}  // namespace

double kkt_residual(const SpectralCovariance& cov, const Vector& target, const Vector& w, double cap) {
  Problem p{cov.matrix(), target, cov.matrix() * target, cap, cov.eigenvalues()(0), cov.size()};
  return residual_of(p, w);
}

ConstrainedPortfolio solve_tracking(const SpectralCovariance& cov, const TargetPortfolio& target,
                                    const OptimizerConfig& cfg) {
  return solve_tracking(cov, target.weights, cfg);
}

ConstrainedPortfolio solve_tracking(const SpectralCovariance& cov, const Vector& target, const OptimizerConfig& cfg) {
  cfg.validate();
  const Index n = cov.size();
  if (n == 0 || target.size() != n) throw Error(ErrorKind::invalid_input, "target size does not match covariance");
  if (!target.allFinite()) throw Error(ErrorKind::invalid_input, "target weights must be finite");
  check_feasible_cap(n, cfg.position_cap);
  const double lambda_max = cov.eigenvalues()(0);
  if (!(lambda_max > 0.0)) throw Error(ErrorKind::invalid_input, "covariance must have a positive eigenvalue");

  Problem p{cov.matrix(), target, cov.matrix() * target, cfg.position_cap, lambda_max, n};
  if (target_feasible(target, cfg.position_cap)) return finalize(p, target, 0, {0.0});
  // w = 0 is optimal iff it is a fixed point of the projected gradient step.
  const Vector step0 = project_onto_cap_cone(p.ct / lambda_max, p.cap);
  if (step0.cwiseAbs().maxCoeff() <= 1e-14 * std::max(p.ct.cwiseAbs().maxCoeff() / lambda_max, 1e-300)) {
    throw Error(ErrorKind::degenerate_scaling, "the constrained solution is identically zero; target has no long part");
  }

  std::vector<double> trace;
  Vector x = project_onto_cap_cone(target, p.cap);

  if (cfg.algorithm == SolverAlgorithm::active_set) {
    trace.push_back(objective(p, x));
    ActiveSetOutcome as = active_set(p, x, identify_face(x, p.cap), cfg.max_iterations, trace);
    const double r = as.converged ? residual_of(p, as.w) : std::numeric_limits<double>::infinity();
    if (!as.converged || !(r <= cfg.kkt_tolerance)) {
      throw ConvergenceError("active-set solver did not reach the KKT tolerance", r, as.iterations);
    }
    return finalize(p, std::move(as.w), as.iterations, std::move(trace));
  }

  // Monotone FISTA with gradient restarts, step 1/L with L = 2 lambda_1 for the
  // objective (w - t)' C (w - t). Once the support stops changing the active-set
  // method finishes the solve exactly on that face.
  constexpr int kStableSteps = 8;
  constexpr int kCheckEvery = 10;
  double fx = objective(p, x);
  trace.push_back(fx);
  Vector y = x;
  double tk = 1.0;
  std::vector<unsigned char> last_face = identify_face(x, p.cap);
  int stable = 0;
  bool polished_on_face = false;
  long used = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (used < cfg.max_iterations) {
    ++used;
    const Vector z = project_onto_cap_cone(y - (p.c * y - p.ct) / lambda_max, p.cap);
    const double fz = objective(p, z);
    const double tk1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    const Vector x_prev = x;
    if (fz <= fx) {
      x = z;
      fx = fz;
    }
    trace.push_back(fx);
    if ((y - z).dot(z - x_prev) > 0.0) {
      // Gradient restart.
      tk = 1.0;
      y = x;
    } else {
      y = x + (tk / tk1) * (z - x) + ((tk - 1.0) / tk1) * (x - x_prev);
      tk = tk1;
    }

    std::vector<unsigned char> face = identify_face(x, p.cap);
    if (face == last_face) {
      ++stable;
    } else {
      stable = 0;
      polished_on_face = false;
      last_face = std::move(face);
    }

    if (stable >= kStableSteps && !polished_on_face) {
      polished_on_face = true;
      std::vector<double> as_trace;
      const long budget = std::min<long>(cfg.max_iterations - used, 4 * n + 50);
      if (budget > 0) {
        ActiveSetOutcome as = active_set(p, x, last_face, budget, as_trace);
        used += as.iterations;
        if (as.converged) {
          const double r = residual_of(p, as.w);
          const double fa = objective(p, as.w);
          if (r <= cfg.kkt_tolerance && fa <= fx + 1e-12 * std::max(fx, 1e-300)) {
            trace.insert(trace.end(), as_trace.begin(), as_trace.end());
            return finalize(p, std::move(as.w), used, std::move(trace));
          }
        }
      }
    }

    if (used % kCheckEvery == 0) {
      residual = residual_of(p, x);
      if (residual <= cfg.kkt_tolerance) return finalize(p, std::move(x), used, std::move(trace));
    }
  }
  residual = residual_of(p, x);
  throw ConvergenceError(
      fmt::format("projected gradient exhausted {} iterations (KKT residual {:.3e})", cfg.max_iterations, residual),
      residual, cfg.max_iterations);
}

KktReport verify_kkt(const SpectralCovariance& cov, const Vector& target, const Vector& candidate,
                     const OptimizerConfig& cfg) {
  const Index n = cov.size();
  if (target.size() != n || candidate.size() != n) {
    throw Error(ErrorKind::invalid_input, "candidate or target size does not match covariance");
  }
  const Matrix& c = cov.matrix();
  const double cap = cfg.position_cap;
  KktReport report;

  const double gross = candidate.sum();
  const double abs_gross = std::max(candidate.cwiseAbs().sum(), 1e-300);
  report.lower_slack = candidate;
  report.upper_slack = Vector::Constant(n, cap * gross) - candidate;
  double violation = std::max(0.0, -candidate.minCoeff());
  if (cap_binds(cap)) violation = std::max(violation, -report.upper_slack.minCoeff());
  report.feasibility_violation = violation / abs_gross;
  report.feasible = report.feasibility_violation <= kFeasTol;

  const Vector ccand = c * candidate;
  const double curvature = candidate.dot(ccand);
  report.scale = curvature > 0.0 ? ccand.dot(target) / curvature : 1.0;
  if (!(report.scale > 0.0)) report.scale = 1.0;
  const Vector w = report.scale * candidate;

  Problem p{c, target, c * target, cap, cov.eigenvalues()(0), n};
  report.stationarity = report.feasible ? residual_of(p, w) : std::numeric_limits<double>::infinity();
  if (report.feasible && static_cast<double>(n) * cap >= 1.0 - 1e-12) {
    const Vector g = c * w - p.ct;
    const double gscale = std::max(p.lambda_max * std::max(w.cwiseAbs().maxCoeff(), 1e-300), 1e-300);
    std::vector<unsigned char> state(static_cast<std::size_t>(n), kFree);
    const double wmax = w.cwiseAbs().maxCoeff();
    for (Index i = 0; i < n; ++i) {
      if (w(i) <= 1e-12 * wmax) state[i] = kLower;
      else if (cap_binds(cap) && w(i) >= cap * w.sum() * (1.0 - 1e-9)) state[i] = kUpper;
    }
    const Multipliers m = face_multipliers(p, state, g);
    report.dual_violation = std::max(0.0, -m.worst_value) / gscale;
    double comp = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (state[i] == kLower) comp = std::max(comp, std::abs((g(i) - m.theta) * w(i)));
      if (state[i] == kUpper) comp = std::max(comp, std::abs((m.theta - g(i)) * (cap * w.sum() - w(i))));
    }
    report.complementarity = comp / (gscale * std::max(wmax, 1e-300));
  }
  report.residual = std::max(report.stationarity, report.feasibility_violation);
  return report;
}

}  // namespace agal
