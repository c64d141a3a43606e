#pragma once

// Exact pathwise decomposition of the averaged error,
//   xbar_n - x* = Xi_n + T_n + R_n,
//   Xi_n = -(1/n) H^{-1} sum xi_t,   T_n = -(1/n) H^{-1} sum u_t,
//   R_n  = (1/n) [A_1 Delta_1 - A_n Delta_{n+1} + sum_{t=2}^n (A_t - A_{t-1}) Delta_t],
// evaluated from the running sums a trajectory stores at each checkpoint.

#include <cstdint>
#include <span>

#include "psgd/driver.hpp"
#include "psgd/linalg.hpp"

namespace psgd {

struct DecompositionTerms {
  std::uint64_t n = 0;
  Vector xi_term;
  Vector taylor_term;
  Vector dynamic_remainder;
  /// ||xbar_n - x* - Xi_n - T_n - R_n||
  double identity_gap = 0.0;
  /// identity_gap / max(1, ||xbar_n - x*||)
  double relative_gap = 0.0;

  /// sqrt(n) ||R_n||
  double scaled_remainder() const;
};

DecompositionTerms compute_terms(const TrajectoryRecord& record, const SpdMatrix& h, std::uint64_t n);
/// Same with a precomputed H^{-1}, for bulk evaluation.
DecompositionTerms compute_terms(const TrajectoryRecord& record, const Matrix& h_inverse, std::uint64_t n);

struct RemainderStats {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Mean and standard error of sqrt(n) ||R_n|| across replications at one n.
/// Every entry must carry the same n. A single replication gives std_error 0.
RemainderStats scaled_remainder_stats(std::span<const DecompositionTerms> terms, std::uint64_t n);

/// Mean and standard error of arbitrary samples (n-1 denominator).
RemainderStats mean_and_se(std::span<const double> values);

}  // namespace psgd
