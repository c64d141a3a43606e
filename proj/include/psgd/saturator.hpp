#pragma once

// Deterministic scalar construction that sits exactly on the stabilization
// threshold. With H = 1 and P_t = 1 / M_t,
//   M_t     = m0 + cM sum_{s=2}^t (-1)^s s^{-beta}
//   Delta_t = cDelta (-1)^t t^{-alpha/2}
//   eta_t   = eta0 t^{-alpha}
// the dynamic remainder splits as R_n = B_n + S_n + D_n with
//   B_n = (1/n) [A_1 Delta_1 - A_n Delta_{n+1}]
//   S_n = (1/n) sum_{t=2}^n (1/eta_t - 1/eta_{t-1}) M_t Delta_t
//   D_n = (1/n) sum_{t=2}^n (1/eta_{t-1}) (M_t - M_{t-1}) Delta_t
// and sqrt(n) |R_n| grows like n^{(alpha+1)/2 - beta}.

#include <cstdint>
#include <span>
#include <vector>

namespace psgd {

struct SaturatingSequences {
  double alpha = 0.7;
  double beta = 0.85;
  double m0 = 1.0;
  double c_m = 1.0;
  double c_delta = 1.0;
  double eta0 = 1.0;

  double eta(std::uint64_t t) const;
  double delta(std::uint64_t t) const;
  /// M_t by direct summation (O(t)); the evaluators accumulate it instead.
  double drift(std::uint64_t t) const;

  /// Throws std::invalid_argument on alpha outside (1/2,1) or non-positive constants.
  void validate() const;
};

/// sup_t |sum_{s=2}^t (-1)^s s^{-beta}|, attained at t = 2.
double alternating_sup(double beta);

struct RemainderSplit {
  std::uint64_t n = 0;
  double r = 0.0;
  double b = 0.0;
  double s = 0.0;
  double d = 0.0;

  double scaled() const;  // sqrt(n) R_n
};

RemainderSplit eval_remainder(const SaturatingSequences& seq, std::uint64_t n);

/// One pass up to max(grid); `grid` must be sorted with entries >= 2.
std::vector<RemainderSplit> eval_remainder_grid(const SaturatingSequences& seq, std::span<const std::uint64_t> grid);

struct HypothesisReport {
  std::uint64_t n_max = 0;
  double max_increment_error = 0.0;  // max_t | |M_t - M_{t-1}| / (cM t^{-beta}) - 1 |
  double max_delta_error = 0.0;      // max_t | |Delta_t| / (cDelta t^{-alpha/2}) - 1 |
  double drift_min = 0.0;
  double drift_max = 0.0;
  double band_low = 0.0;   // m0 - cM C_beta
  double band_high = 0.0;  // m0 + cM C_beta
  bool band_positive = false;
  bool drift_in_band = false;
  bool dynamic_positive = false;  // D_n > 0 for every 2 <= n <= n_max

  bool ok() const { return band_positive && drift_in_band && dynamic_positive; }
};

HypothesisReport verify_hypotheses(const SaturatingSequences& seq, std::uint64_t n_max);

}  // namespace psgd
