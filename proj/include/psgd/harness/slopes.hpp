#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace psgd::harness {

enum class FitRange { Full, SecondHalf };

FitRange parse_fit_range(std::string_view s);
std::string_view to_string(FitRange r);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// OLS of log y on log n. `SecondHalf` keeps the points whose log n is at or
/// above the midpoint of the log-n range. Needs at least 3 points in range;
/// a non-positive y in range throws.
SlopeFit fit_loglog_slope(std::span<const std::pair<double, double>> points, FitRange range = FitRange::Full);

/// Same over the explicit window lo <= n <= hi.
SlopeFit fit_loglog_window(std::span<const std::pair<double, double>> points, double lo, double hi);

/// Averages y within logarithmic bins (`per_decade` per decade) restricted to
/// [lo, hi], then fits on (geometric bin centre, bin mean). Dense series such
/// as per-step increments would otherwise give the first decade all leverage.
SlopeFit fit_binned_loglog(std::span<const std::pair<double, double>> points, double lo, double hi,
                           int per_decade = 10);

/// The binned means themselves (centre, mean), in increasing centre order.
std::vector<std::pair<double, double>> log_bin_means(std::span<const std::pair<double, double>> points, double lo,
                                                     double hi, int per_decade = 10);

}  // namespace psgd::harness
