#include "psgd/harness/slopes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace psgd::harness {

FitRange parse_fit_range(std::string_view s) {
  if (s == "full") return FitRange::Full;
  if (s == "second_half") return FitRange::SecondHalf;
  throw std::invalid_argument("unknown fit range: " + std::string(s));
}

std::string_view to_string(FitRange r) { return r == FitRange::Full ? "full" : "second_half"; }

namespace {

SlopeFit ols(const std::vector<std::pair<double, double>>& logs) {
  if (logs.size() < 3) throw std::invalid_argument("slope fit needs at least 3 points in range");
  const double m = static_cast<double>(logs.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : logs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("slope fit needs distinct n values");
  SlopeFit f;
  f.points = logs.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

std::vector<std::pair<double, double>> to_logs(std::span<const std::pair<double, double>> points, double lo,
                                               double hi) {
  std::vector<std::pair<double, double>> logs;
  for (const auto& [n, y] : points) {
    if (n < lo || n > hi) continue;
    if (!(n > 0.0)) throw std::invalid_argument("slope fit: n must be positive");
    if (!(y > 0.0)) throw std::invalid_argument("slope fit: non-positive y at n = " + std::to_string(n));
    logs.emplace_back(std::log(n), std::log(y));
  }
  return logs;
}

}  // namespace

SlopeFit fit_loglog_window(std::span<const std::pair<double, double>> points, double lo, double hi) {
  return ols(to_logs(points, lo, hi));
}

SlopeFit fit_loglog_slope(std::span<const std::pair<double, double>> points, FitRange range) {
  if (points.empty()) throw std::invalid_argument("slope fit needs at least 3 points in range");
  double lo = points.front().first, hi = lo;
  for (const auto& p : points) {
    lo = std::min(lo, p.first);
    hi = std::max(hi, p.first);
  }
  if (range == FitRange::SecondHalf) {
    if (!(lo > 0.0)) throw std::invalid_argument("slope fit: n must be positive");
    lo = std::exp(0.5 * (std::log(lo) + std::log(hi)));
    // Guard against the midpoint landing a hair above a grid point.
    lo *= 1.0 - 1e-12;
  }
  return ols(to_logs(points, lo, hi));
}

std::vector<std::pair<double, double>> log_bin_means(std::span<const std::pair<double, double>> points, double lo,
                                                     double hi, int per_decade) {
  if (!(lo > 0.0) || hi < lo || per_decade <= 0) throw std::invalid_argument("log_bin_means: bad window");
  const double base = std::log10(lo);
  // The right edge folds into the last bin rather than opening a singleton.
  const std::size_t bins =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((std::log10(hi) - base) * per_decade - 1e-9)));
  std::vector<double> sum(bins, 0.0), log_n(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (const auto& [n, y] : points) {
    if (n < lo || n > hi) continue;
    const auto b = std::min(bins - 1, static_cast<std::size_t>((std::log10(n) - base) * per_decade));
    sum[b] += y;
    log_n[b] += std::log(n);
    ++count[b];
  }
  std::vector<std::pair<double, double>> out;
  for (std::size_t b = 0; b < bins; ++b)
    if (count[b] > 0) out.emplace_back(std::exp(log_n[b] / count[b]), sum[b] / count[b]);
  return out;
}

SlopeFit fit_binned_loglog(std::span<const std::pair<double, double>> points, double lo, double hi, int per_decade) {
  const auto means = log_bin_means(points, lo, hi, per_decade);
  return fit_loglog_window(means, lo, hi);
}

}  // namespace psgd::harness
