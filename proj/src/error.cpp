#include "agal/error.hpp"

#include <fmt/format.h>

namespace agal {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::invalid_window: return "invalid-window";
    case ErrorKind::singular_matrix: return "singular-matrix";
    case ErrorKind::degenerate_scaling: return "degenerate-scaling";
    case ErrorKind::degenerate_residual: return "degenerate-residual";
    case ErrorKind::cleaning_failed: return "cleaning-failed";
    case ErrorKind::pool_too_small: return "pool-too-small";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::beta_undefined: return "beta-undefined";
    case ErrorKind::undefined_correlation: return "undefined-correlation";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::infeasible: return "infeasible";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::convergence:
    case ErrorKind::cleaning_failed:
      return 3;
    case ErrorKind::infeasible:
      return 4;
    default:
      return 2;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", to_string(kind), message)), kind_(kind) {}

ConvergenceError::ConvergenceError(const std::string& message, double residual, long iterations)
    : Error(ErrorKind::convergence,
            fmt::format("{} (residual {:.3e} after {} iterations)", message, residual, iterations)),
      residual_(residual),
      iterations_(iterations) {}

}  // namespace agal
