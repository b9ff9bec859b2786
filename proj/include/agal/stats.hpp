#pragma once

#include <vector>

#include "agal/common.hpp"

namespace agal::stats {

double mean(const Vector& x);

/// Sample variance (n - 1 denominator).
double variance(const Vector& x);

/// Sample covariance (n - 1 denominator).
double covariance(const Vector& x, const Vector& y);

/// Pearson correlation; NaN when either series has zero variance.
double correlation(const Vector& x, const Vector& y);

/// Ranks 1..n with ties sharing their average rank.
Vector average_ranks(const Vector& x);

/// Spearman rank correlation.
double spearman(const Vector& x, const Vector& y);

Vector to_vector(const std::vector<double>& values);

}  // namespace agal::stats
