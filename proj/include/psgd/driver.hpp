#pragma once

// Preconditioned SGD with Polyak-Ruppert averaging:
//   x_{t+1} = x_t - eta_t P_t g_t,   xbar_n = (1/n) sum_{t<=n} x_t,
// tracking online everything the exact error decomposition needs. With
// Delta_t = x_t - x*, xi_t = g_t - grad F(x_t), u_t = grad F(x_t) - H Delta_t
// and A_t = eta_t^{-1} (P_t H)^{-1}, each checkpoint stores sum xi_t, sum u_t,
// A_1 Delta_1, A_n Delta_{n+1} and the Abel sum sum_{t=2}^n (A_t - A_{t-1}) Delta_t.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psgd/linalg.hpp"
#include "psgd/preconditioners.hpp"
#include "psgd/problems.hpp"

namespace psgd {

struct StepSchedule {
  double eta0 = 0.2;
  double alpha = 0.7;

  double eta(std::uint64_t t) const { return eta0 * std::pow(static_cast<double>(t), -alpha); }
  void validate() const;
};

struct RunConfig {
  ProblemPtr problem;
  PreconditionerSpec preconditioner;
  StepSchedule steps;
  std::uint64_t n_max = 0;
  std::vector<std::uint64_t> checkpoints;  // sorted, within [1, n_max]
  std::optional<double> clip_norm;
  std::uint64_t seed = 0;

  /// Starting point; defaults to x* + (1/sqrt d) 1.
  std::optional<Vector> x1;
  /// Stabilization probe cadence.
  std::uint64_t probe_dense_until = 10000;
  double probe_growth = 1.02;
  bool record_probes = true;
  /// Keep the full per-step history (x_t, P_t, g_t) for debugging; O(n d^2).
  bool keep_history = false;

  void validate() const;
};

struct Checkpoint {
  std::uint64_t n = 0;
  Vector iterate;          // x_n
  Vector next_error;       // Delta_{n+1}
  Vector average_error;    // xbar_n - x*
  Vector sum_xi;           // sum_{t<=n} xi_t
  Vector sum_u;            // sum_{t<=n} u_t
  Vector first_boundary;   // A_1 Delta_1
  Vector last_boundary;    // A_n Delta_{n+1}
  Vector abel_sum;         // sum_{t=2}^n (A_t - A_{t-1}) Delta_t
  Matrix drift;            // M_n
  std::uint64_t clipped_steps = 0;
};

struct TrajectoryHistory {
  std::vector<Vector> iterates;        // x_1 .. x_{n+1}
  std::vector<Matrix> preconditioners; // P_1 .. P_n
  std::vector<Vector> gradients;       // g_1 .. g_n (as applied)
  std::vector<double> etas;            // eta_1 .. eta_n
};

struct TrajectoryRecord {
  std::string method;
  std::uint64_t seed = 0;
  Vector x_star;
  std::vector<Checkpoint> checkpoints;
  std::vector<ProbeRow> probes;
  std::uint64_t steps_run = 0;
  std::uint64_t clipped_steps = 0;
  std::uint64_t clipped_after_100 = 0;
  bool aborted = false;
  std::string abort_reason;
  std::optional<TrajectoryHistory> history;

  /// Throws std::out_of_range if n was not a checkpoint.
  const Checkpoint& at(std::uint64_t n) const;
  bool has(std::uint64_t n) const;
};

TrajectoryRecord run_trajectory(const RunConfig& config);

/// xbar_n - x*.
Vector averaged_error(const TrajectoryRecord& record, std::uint64_t n);

/// Log-spaced grid with `per_decade` points per decade from n_min to n_max
/// (rounded to integers, deduplicated, always containing n_max).
std::vector<std::uint64_t> log_grid(std::uint64_t n_min, std::uint64_t n_max, int per_decade);

}  // namespace psgd
