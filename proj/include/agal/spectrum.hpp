#pragma once

#include <cstdint>
#include <string_view>

#include "agal/common.hpp"
#include "agal/data.hpp"

namespace agal {

enum class CleaningTag { raw, cross_validated };

std::string_view to_string(CleaningTag tag);

struct Eigensystem {
  Vector values;   ///< non-increasing
  Matrix vectors;  ///< orthonormal columns, column k pairs with values(k)
};

/// Symmetric eigen-decomposition, eigenvalues sorted non-increasing.
/// Each eigenvector's sign is fixed so its components sum to a non-negative value.
Eigensystem eigendecompose(const Matrix& c);

/// Symmetric covariance with its cached eigen-decomposition. Immutable.
class SpectralCovariance {
 public:
  SpectralCovariance() = default;

  /// Decomposes `matrix` (must be symmetric to 1e-10 relative).
  static SpectralCovariance from_matrix(Matrix matrix, CleaningTag tag = CleaningTag::raw);

  /// Builds sum_k lambda_k u_k u_k' from a spectrum. Pairs are re-sorted if needed.
  static SpectralCovariance from_spectrum(Vector eigenvalues, Matrix eigenvectors, CleaningTag tag);

  const Matrix& matrix() const { return matrix_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& eigenvectors() const { return eigenvectors_; }
  CleaningTag cleaning_tag() const { return tag_; }
  Index size() const { return matrix_.rows(); }

  Vector volatilities() const;
  SpectralCovariance scaled(double factor) const;
  /// Content hash of the matrix bytes, used to check that inputs are shared.
  std::uint64_t digest() const;

 private:
  Matrix matrix_;
  Vector eigenvalues_;
  Matrix eigenvectors_;
  CleaningTag tag_ = CleaningTag::raw;
};

/// Half-open date-index window [begin, end).
struct Window {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
};

/// C_ij = (1/T_w) sum_t r_i(t) r_j(t) over the window, no mean subtraction.
/// Missing returns count as zero.
SpectralCovariance empirical_covariance(const ReturnsPanel& returns, Window window);

/// N x T matrix of window returns with missing entries replaced by zero.
Matrix window_matrix(const ReturnsPanel& returns, Window window);

enum class EigenFloor { enabled, disabled };

/// Relative floor applied to the spectrum before negative powers.
inline constexpr double kEigenFloor = 1e-10;

/// Eigenvalues raised to `exponent`, with the floor policy applied.
Vector powered_eigenvalues(const SpectralCovariance& c, double exponent, EigenFloor floor = EigenFloor::enabled);

/// sum_k lambda_k^exponent u_k u_k'.
Matrix matrix_power(const SpectralCovariance& c, double exponent, EigenFloor floor = EigenFloor::enabled);

struct CleaningConfig {
  double holdout_fraction = 0.10;
  int n_folds = 100;
  std::uint64_t seed = 0;
  bool isotonic = true;
  bool preserve_trace = true;
  /// Divide each series by its RMS over the window before cleaning.
  bool standardize = false;
  int jobs = 1;

  void validate() const;
};

struct CleaningDiagnostics {
  Vector full_sample;      ///< raw full-window eigenvalues
  Vector in_sample;        ///< fold-averaged in-sample eigenvalues, by rank
  Vector cross_validated;  ///< fold-averaged out-of-sample eigenvalues, by rank
  Vector cleaned;          ///< final eigenvalues, by rank
  int folds_used = 0;
  int folds_skipped = 0;
};

/// Non-decreasing least-squares fit of `y` against `x` (pool adjacent violators).
/// Tied x values share one fitted value. Returns fitted values in input order.
Vector isotonic_regression(const Vector& x, const Vector& y);

/// Evaluates the piecewise-linear interpolant of sorted (x, y) knots at `at`,
/// clamping outside the knot range.
double interpolate_clamped(const Vector& x_sorted, const Vector& y_sorted, double at);

/// Cross-validated eigenvalue cleaning of the window covariance.
SpectralCovariance cross_validated_clean(const ReturnsPanel& returns, Window window, const CleaningConfig& cfg,
                                         CleaningDiagnostics* diagnostics = nullptr);

/// Same on an N x T returns matrix (missing already zero-filled).
SpectralCovariance cross_validated_clean(const Matrix& window_returns, const CleaningConfig& cfg,
                                         CleaningDiagnostics* diagnostics = nullptr);

}  // namespace agal
