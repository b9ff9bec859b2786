#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agal {

enum class ErrorKind {
  invalid_input,
  invalid_window,
  singular_matrix,
  degenerate_scaling,
  degenerate_residual,
  cleaning_failed,
  pool_too_small,
  coverage,
  beta_undefined,
  undefined_correlation,
  convergence,
  infeasible,
};

std::string_view to_string(ErrorKind kind);

/// Process exit status used by the CLI: 2 input errors, 3 convergence, 4 infeasibility.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when an iterative routine runs out of budget; carries the last residual.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double residual, long iterations);

  double residual() const noexcept { return residual_; }
  long iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  long iterations_;
};

}  // namespace agal
