#include "psgd/inference.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace psgd {

SandwichOracle make_sandwich_oracle(const SpdMatrix& h, const SpdMatrix& s) {
  if (h.dim() != s.dim()) throw std::invalid_argument("make_sandwich_oracle: dimension mismatch");
  const Matrix h_inv = spectral_map(h, SpectralMap::Inverse).matrix();
  const SpdMatrix v(h_inv * s.matrix() * h_inv);
  SandwichOracle out;
  out.v = v.matrix();
  out.marginal_sd.resize(h.dim());
  for (std::size_t j = 0; j < h.dim(); ++j) {
    out.trace_v += out.v(j, j);
    out.marginal_sd[j] = std::sqrt(out.v(j, j));
  }
  return out;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double two_sided_z(double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("coverage level must be in (0,1)");
  if (level == 0.95) return 1.959964;
  return normal_quantile(0.5 + level / 2.0);
}

double coverage_of_error(std::span<const double> error, const SandwichOracle& oracle, std::uint64_t n,
                         double level) {
  if (error.size() != oracle.marginal_sd.size()) throw std::invalid_argument("coverage: dimension mismatch");
  if (n == 0) throw std::invalid_argument("coverage: n must be positive");
  const double z = two_sided_z(level);
  const double root_n = std::sqrt(static_cast<double>(n));
  std::size_t hits = 0;
  for (std::size_t j = 0; j < error.size(); ++j)
    if (std::abs(error[j]) <= z * oracle.marginal_sd[j] / root_n) ++hits;
  return static_cast<double>(hits) / static_cast<double>(error.size());
}

double nmse_of_error(std::span<const double> error, const SandwichOracle& oracle, std::uint64_t n) {
  if (error.size() != oracle.marginal_sd.size()) throw std::invalid_argument("nmse: dimension mismatch");
  if (n == 0) throw std::invalid_argument("nmse: n must be positive");
  double sq = 0.0;
  for (double e : error) sq += e * e;
  return static_cast<double>(n) * sq / oracle.trace_v;
}

namespace {
Vector difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("estimate and truth differ in dimension");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}
}  // namespace

double coverage(std::span<const double> x_bar, std::span<const double> x_star, const SandwichOracle& oracle,
                std::uint64_t n, double level) {
  return coverage_of_error(difference(x_bar, x_star), oracle, n, level);
}

double nmse(std::span<const double> x_bar, std::span<const double> x_star, const SandwichOracle& oracle,
            std::uint64_t n) {
  return nmse_of_error(difference(x_bar, x_star), oracle, n);
}

}  // namespace psgd
