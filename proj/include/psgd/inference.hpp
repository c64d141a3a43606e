#pragma once

// Wald inference against the known sandwich covariance V = H^{-1} S H^{-1}.

#include <span>

#include "psgd/linalg.hpp"

namespace psgd {

struct SandwichOracle {
  Matrix v;
  double trace_v = 0.0;
  Vector marginal_sd;  // sqrt(V_jj)
};

SandwichOracle make_sandwich_oracle(const SpdMatrix& h, const SpdMatrix& s);

/// z with Phi(z) = p, 0 < p < 1 (rational approximation, |error| < 1.2e-8).
double normal_quantile(double p);

/// Two-sided critical value for a central `level` interval; 0.95 maps to 1.959964.
double two_sided_z(double level);

/// Fraction of coordinates j with |xbar_j - x*_j| <= z sqrt(V_jj / n).
double coverage(std::span<const double> x_bar, std::span<const double> x_star, const SandwichOracle& oracle,
                std::uint64_t n, double level = 0.95);

/// n ||xbar - x*||^2 / tr V.
double nmse(std::span<const double> x_bar, std::span<const double> x_star, const SandwichOracle& oracle,
            std::uint64_t n);

/// Same two, taking the error vector xbar - x* directly.
double coverage_of_error(std::span<const double> error, const SandwichOracle& oracle, std::uint64_t n,
                         double level = 0.95);
double nmse_of_error(std::span<const double> error, const SandwichOracle& oracle, std::uint64_t n);

}  // namespace psgd
