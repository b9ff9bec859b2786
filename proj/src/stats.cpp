#include "agal/stats.hpp"

#include <algorithm>
#include <numeric>

#include "agal/error.hpp"

namespace agal::stats {

namespace {

void require_pair(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::invalid_input, "series lengths differ");
  if (x.size() < 2) throw Error(ErrorKind::invalid_input, "need at least two observations");
}

}  // namespace

double mean(const Vector& x) {
  if (x.size() == 0) throw Error(ErrorKind::invalid_input, "mean of an empty series");
  return x.mean();
}

double covariance(const Vector& x, const Vector& y) {
  require_pair(x, y);
  const double mx = x.mean();
  const double my = y.mean();
  double acc = 0.0;
  for (Index i = 0; i < x.size(); ++i) acc += (x(i) - mx) * (y(i) - my);
  return acc / static_cast<double>(x.size() - 1);
}

double variance(const Vector& x) { return covariance(x, x); }

double correlation(const Vector& x, const Vector& y) {
  const double vx = variance(x);
  const double vy = variance(y);
  if (!(vx > 0.0) || !(vy > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return covariance(x, y) / std::sqrt(vx * vy);
}

Vector average_ranks(const Vector& x) {
  const Index n = x.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x(a) < x(b); });
  Vector ranks(n);
  Index k = 0;
  while (k < n) {
    Index j = k;
    while (j + 1 < n && x(order[j + 1]) == x(order[k])) ++j;
    const double rank = 0.5 * static_cast<double>(k + j) + 1.0;
    for (Index m = k; m <= j; ++m) ranks(order[m]) = rank;
    k = j + 1;
  }
  return ranks;
}

double spearman(const Vector& x, const Vector& y) {
  require_pair(x, y);
  return correlation(average_ranks(x), average_ranks(y));
}

Vector to_vector(const std::vector<double>& values) {
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace agal::stats
