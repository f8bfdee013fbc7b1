#pragma once

#include <span>

namespace roughsync {

/// Least-squares slope of log(y) against log(x). Entries with x <= 0 or y <= 0
/// are skipped; fewer than two usable points yields NaN.
double loglog_slope(std::span<const double> x, std::span<const double> y);

/// Least-squares slope of y against x.
double linear_slope(std::span<const double> x, std::span<const double> y);

}  // namespace roughsync
