#include "agal/spectrum.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <lapacke.h>

#include "agal/error.hpp"
#include "agal/parallel.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace agal {

std::string_view to_string(CleaningTag tag) {
  return tag == CleaningTag::raw ? "raw" : "cross_validated";
}

namespace {

// Results must not depend on how many BLAS threads happen to be available.
void pin_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

void fix_signs(Matrix& vectors) {
  for (Index k = 0; k < vectors.cols(); ++k) {
    auto col = vectors.col(k);
    const double sum = col.sum();
    bool flip = sum < 0.0;
    if (std::abs(sum) <= 1e-12) {
      Index arg = 0;
      col.cwiseAbs().maxCoeff(&arg);
      flip = col(arg) < 0.0;
    }
    if (flip) col = -col;
  }
}

void symmetrize(Matrix& m) { m = (0.5 * (m + m.transpose())).eval(); }

Matrix gram(const Matrix& r) {
  Matrix g = Matrix::Zero(r.rows(), r.rows());
  g.selfadjointView<Eigen::Lower>().rankUpdate(r);
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

}  // namespace

Eigensystem eigendecompose(const Matrix& c) {
  if (c.rows() != c.cols()) {
    throw Error(ErrorKind::invalid_input, "eigendecompose needs a square matrix");
  }
  const Index n = c.rows();
  Eigensystem out;
  if (n == 0) return out;
  const double scale = std::max(c.cwiseAbs().maxCoeff(), 1e-300);
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorKind::invalid_input, "eigendecompose: matrix is not symmetric");
  }
  if (!c.allFinite()) {
    throw Error(ErrorKind::invalid_input, "eigendecompose: non-finite entries");
  }
  pin_blas_threads();
  Matrix a = 0.5 * (c + c.transpose());
  Vector w(n);
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n), a.data(),
                                         static_cast<lapack_int>(n), w.data());
  if (info != 0) {
    throw Error(ErrorKind::singular_matrix, fmt::format("symmetric eigen-solver failed (info {})", info));
  }
  out.values = w.reverse();
  out.vectors = a.rowwise().reverse();
  fix_signs(out.vectors);
  return out;
}

SpectralCovariance SpectralCovariance::from_matrix(Matrix matrix, CleaningTag tag) {
  auto eig = eigendecompose(matrix);
  SpectralCovariance c;
  symmetrize(matrix);
  c.matrix_ = std::move(matrix);
  c.eigenvalues_ = std::move(eig.values);
  c.eigenvectors_ = std::move(eig.vectors);
  c.tag_ = tag;
  return c;
}

SpectralCovariance SpectralCovariance::from_spectrum(Vector eigenvalues, Matrix eigenvectors, CleaningTag tag) {
  const Index n = eigenvalues.size();
  if (eigenvectors.rows() != n || eigenvectors.cols() != n) {
    throw Error(ErrorKind::invalid_input, "spectrum and eigenvector dimensions differ");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return eigenvalues(a) > eigenvalues(b); });
  SpectralCovariance c;
  c.eigenvalues_.resize(n);
  c.eigenvectors_.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    c.eigenvalues_(k) = eigenvalues(order[static_cast<std::size_t>(k)]);
    c.eigenvectors_.col(k) = eigenvectors.col(order[static_cast<std::size_t>(k)]);
  }
  c.matrix_ = c.eigenvectors_ * c.eigenvalues_.asDiagonal() * c.eigenvectors_.transpose();
  symmetrize(c.matrix_);
  c.tag_ = tag;
  return c;
}

Vector SpectralCovariance::volatilities() const { return matrix_.diagonal().cwiseMax(0.0).cwiseSqrt(); }

SpectralCovariance SpectralCovariance::scaled(double factor) const {
  SpectralCovariance c = *this;
  c.matrix_ *= factor;
  c.eigenvalues_ *= factor;
  return c;
}

std::uint64_t SpectralCovariance::digest() const {
  // FNV-1a over the raw matrix bytes.
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(matrix_.data());
  const std::size_t count = static_cast<std::size_t>(matrix_.size()) * sizeof(double);
  for (std::size_t i = 0; i < count; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

Matrix window_matrix(const ReturnsPanel& returns, Window window) {
  if (window.end <= window.begin || window.end > returns.dates.size()) {
    throw Error(ErrorKind::invalid_window,
                fmt::format("window [{}, {}) invalid for {} dates", window.begin, window.end, returns.dates.size()));
  }
  Matrix r = returns.returns.middleCols(static_cast<Index>(window.begin), static_cast<Index>(window.length()));
  return r.unaryExpr([](double x) { return is_missing(x) ? 0.0 : x; });
}

SpectralCovariance empirical_covariance(const ReturnsPanel& returns, Window window) {
  if (window.end <= window.begin + 1) {
    throw Error(ErrorKind::invalid_window, fmt::format("covariance window needs >= 2 dates, got {}",
                                                       window.end > window.begin ? window.length() : 0));
  }
  const Matrix r = window_matrix(returns, window);
  Matrix c = gram(r) / static_cast<double>(window.length());
  return SpectralCovariance::from_matrix(std::move(c), CleaningTag::raw);
}

Vector powered_eigenvalues(const SpectralCovariance& c, double exponent, EigenFloor floor) {
  const Vector& lambda = c.eigenvalues();
  const Index n = lambda.size();
  if (exponent == 0.0) return Vector::Ones(n);
  Vector eff = lambda;
  if (exponent < 0.0) {
    const double top = n > 0 ? lambda(0) : 0.0;
    if (floor == EigenFloor::enabled) {
      if (!(top > 0.0)) {
        throw Error(ErrorKind::singular_matrix, "negative power of a matrix with no positive eigenvalue");
      }
      eff = lambda.cwiseMax(kEigenFloor * top);
    } else if (n > 0 && !(lambda(n - 1) > 0.0)) {
      throw Error(ErrorKind::singular_matrix,
                  fmt::format("negative power with smallest eigenvalue {:.3e} and flooring disabled", lambda(n - 1)));
    }
  } else {
    eff = lambda.cwiseMax(0.0);
  }
  return eff.array().pow(exponent).matrix();
}

Matrix matrix_power(const SpectralCovariance& c, double exponent, EigenFloor floor) {
  const Vector p = powered_eigenvalues(c, exponent, floor);
  const Matrix& u = c.eigenvectors();
  Matrix out = u * p.asDiagonal() * u.transpose();
  symmetrize(out);
  return out;
}

void CleaningConfig::validate() const {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 0.5)) {
    throw Error(ErrorKind::invalid_input, "holdout_fraction must lie in (0, 0.5)");
  }
  if (n_folds < 1) throw Error(ErrorKind::invalid_input, "n_folds must be >= 1");
}

Vector isotonic_regression(const Vector& x, const Vector& y) {
  const Index n = x.size();
  if (y.size() != n) throw Error(ErrorKind::invalid_input, "isotonic_regression: size mismatch");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x(a) < x(b); });

  struct Block {
    double sum;
    double weight;
    std::size_t first;
    std::size_t last;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> blocks;
  std::size_t pos = 0;
  while (pos < order.size()) {
    // Equal x values form one initial block.
    std::size_t end = pos + 1;
    double sum = y(order[pos]);
    while (end < order.size() && x(order[end]) == x(order[pos])) sum += y(order[end++]);
    blocks.push_back({sum, static_cast<double>(end - pos), pos, end - 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().weight += top.weight;
      blocks.back().last = top.last;
    }
    pos = end;
  }
  Vector fitted(n);
  for (const auto& b : blocks) {
    for (std::size_t p = b.first; p <= b.last; ++p) fitted(order[p]) = b.mean();
  }
  return fitted;
}

double interpolate_clamped(const Vector& x_sorted, const Vector& y_sorted, double at) {
  const Index n = x_sorted.size();
  if (n == 0) throw Error(ErrorKind::invalid_input, "interpolate_clamped: no knots");
  if (at <= x_sorted(0)) return y_sorted(0);
  if (at >= x_sorted(n - 1)) return y_sorted(n - 1);
  const double* begin = x_sorted.data();
  const double* hi = std::upper_bound(begin, begin + n, at);
  const Index j = static_cast<Index>(hi - begin);
  const double x0 = x_sorted(j - 1);
  const double x1 = x_sorted(j);
  if (x1 == x0) return y_sorted(j);
  const double u = (at - x0) / (x1 - x0);
  return y_sorted(j - 1) + u * (y_sorted(j) - y_sorted(j - 1));
}

namespace {

struct FoldResult {
  Vector in_sample;
  Vector out_of_sample;
  bool used = false;
};

std::vector<Index> holdout_days(std::uint64_t seed, int fold, Index t, Index t_out) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), 0x5eedU};
  std::mt19937_64 rng(seq);
  std::vector<Index> days(static_cast<std::size_t>(t));
  std::iota(days.begin(), days.end(), Index{0});
  for (Index i = 0; i < t_out; ++i) {
    std::uniform_int_distribution<Index> pick(i, t - 1);
    std::swap(days[static_cast<std::size_t>(i)], days[static_cast<std::size_t>(pick(rng))]);
  }
  days.resize(static_cast<std::size_t>(t_out));
  std::sort(days.begin(), days.end());
  return days;
}

}  // namespace

SpectralCovariance cross_validated_clean(const Matrix& window_returns, const CleaningConfig& cfg,
                                         CleaningDiagnostics* diagnostics) {
  cfg.validate();
  const Index n = window_returns.rows();
  const Index t = window_returns.cols();
  if (n < 2) throw Error(ErrorKind::invalid_input, "cross-validated cleaning needs N >= 2");
  if (t < 10) throw Error(ErrorKind::invalid_window, fmt::format("cleaning window needs >= 10 dates, got {}", t));

  Vector scale = Vector::Ones(n);
  Matrix r = window_returns;
  if (cfg.standardize) {
    for (Index i = 0; i < n; ++i) {
      const double rms = std::sqrt(r.row(i).squaredNorm() / static_cast<double>(t));
      if (rms > 0.0) {
        scale(i) = rms;
        r.row(i) /= rms;
      }
    }
  }

  const Matrix total = gram(r);
  const Matrix full_cov = total / static_cast<double>(t);
  const Eigensystem full = eigendecompose(full_cov);
  const Index t_out = std::clamp<Index>(static_cast<Index>(std::ceil(cfg.holdout_fraction * static_cast<double>(t))),
                                        1, t - 1);

  std::vector<FoldResult> folds(static_cast<std::size_t>(cfg.n_folds));
  parallel_for(folds.size(), cfg.jobs, [&](std::size_t f) {
    const auto days = holdout_days(cfg.seed, static_cast<int>(f), t, t_out);
    Matrix out(n, t_out);
    for (Index j = 0; j < t_out; ++j) out.col(j) = r.col(days[static_cast<std::size_t>(j)]);
    const Matrix held = gram(out);
    const Matrix in_cov = (total - held) / static_cast<double>(t - t_out);
    const Eigensystem in = eigendecompose(in_cov);
    const Matrix proj = in.vectors.transpose() * out;
    FoldResult res;
    res.out_of_sample = proj.rowwise().squaredNorm() / static_cast<double>(t_out);
    res.in_sample = in.values;
    res.used = res.out_of_sample.sum() > 0.0;
    folds[f] = std::move(res);
  });

  Vector in_avg = Vector::Zero(n);
  Vector oos_avg = Vector::Zero(n);
  int used = 0;
  for (const auto& f : folds) {
    if (!f.used) continue;
    in_avg += f.in_sample;
    oos_avg += f.out_of_sample;
    ++used;
  }
  const int skipped = cfg.n_folds - used;
  if (used == 0) {
    throw Error(ErrorKind::cleaning_failed, "every holdout fold had zero variance");
  }
  in_avg /= used;
  oos_avg /= used;

  Vector cleaned(n);
  if (cfg.isotonic) {
    const Vector fitted = isotonic_regression(in_avg, oos_avg);
    // Knots ascending in x; in-sample averages are non-increasing by rank.
    Vector xs = in_avg.reverse();
    Vector ys = fitted.reverse();
    for (Index k = 0; k < n; ++k) cleaned(k) = interpolate_clamped(xs, ys, full.values(k));
  } else {
    cleaned = oos_avg;
  }

  const double top = cleaned.maxCoeff();
  if (!(top > 0.0)) throw Error(ErrorKind::cleaning_failed, "cross-validated spectrum is not positive");
  cleaned = cleaned.cwiseMax(1e-12 * top);

  SpectralCovariance result;
  if (cfg.standardize) {
    Matrix m = full.vectors * cleaned.asDiagonal() * full.vectors.transpose();
    m = scale.asDiagonal() * m * scale.asDiagonal();
    if (cfg.preserve_trace) {
      const double raw_trace = (window_returns.rowwise().squaredNorm() / static_cast<double>(t)).sum();
      m *= raw_trace / m.trace();
    }
    symmetrize(m);
    result = SpectralCovariance::from_matrix(std::move(m), CleaningTag::cross_validated);
  } else {
    if (cfg.preserve_trace) cleaned *= full_cov.trace() / cleaned.sum();
    result = SpectralCovariance::from_spectrum(cleaned, full.vectors, CleaningTag::cross_validated);
  }

  if (diagnostics != nullptr) {
    diagnostics->full_sample = full.values;
    diagnostics->in_sample = in_avg;
    diagnostics->cross_validated = oos_avg;
    diagnostics->cleaned = result.eigenvalues();
    diagnostics->folds_used = used;
    diagnostics->folds_skipped = skipped;
  }
  return result;
}

SpectralCovariance cross_validated_clean(const ReturnsPanel& returns, Window window, const CleaningConfig& cfg,
                                         CleaningDiagnostics* diagnostics) {
  return cross_validated_clean(window_matrix(returns, window), cfg, diagnostics);
}

}  // namespace agal
