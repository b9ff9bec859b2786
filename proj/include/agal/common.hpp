#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include <Eigen/Dense>

namespace agal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Missing panel entries are stored as quiet NaN.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

inline constexpr double kTradingDaysPerYear = 252.0;
inline constexpr double kWeeksPerYear = 52.0;

}  // namespace agal
