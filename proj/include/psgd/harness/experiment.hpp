#pragma once

// Experiment orchestration: builds problems, schedules replications over a
// worker pool with deterministic seeds, and reduces the per-checkpoint
// measurements into rows, aggregates and per-group summaries.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psgd/driver.hpp"
#include "psgd/harness/config.hpp"
#include "psgd/harness/slopes.hpp"
#include "psgd/preconditioners.hpp"
#include "psgd/problems.hpp"
#include "psgd/saturator.hpp"

namespace psgd::harness {

enum class ExperimentKind { Synth, Logistic, Threshold, Saturate };

std::string_view to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(std::string_view s);

/// Settings shared by every method token of an experiment.
struct MethodDefaults {
  InputMode input = InputMode::Hessian;
  double epsilon = 0.5;
  bool ridge_before_map = true;
  GainSchedule schedule = GainSchedule::sa_shifted();
  std::optional<DriverClip> driver_clip;
};

/// "identity", "sa_adagrad", "sa_rmsprop", "sa_ons" or "ema_rmsprop_<rho>".
PreconditionerSpec parse_method(std::string_view token, const MethodDefaults& defaults);

struct SaturatorSweep {
  std::vector<double> alphas{0.7};
  std::vector<double> betas{0.6, 0.75, 0.85, 1.0};
  double m0 = 1.0;
  double c_m = 1.0;
  double c_delta = 1.0;
  double eta0 = 1.0;
  std::uint64_t n_min = 1000;
  std::uint64_t n_max = 1000000;
  int per_decade = 30;
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Synth;
  std::vector<std::size_t> dims{5};
  std::vector<Regime> regimes{Regime::GeneralSandwich, Regime::InfoEquality};
  std::vector<PreconditionerSpec> methods;
  MethodDefaults method_defaults;
  std::vector<std::uint64_t> n_grid;  // checkpoints; the largest is n_max
  std::uint64_t replications = 50;
  std::uint64_t base_seed = 20240917;
  std::filesystem::path output_dir = "out";

  StepSchedule steps;
  std::optional<double> clip_norm = 500.0;
  double noise_target_ratio = 1.5;

  std::filesystem::path data_path;
  double ridge = 0.1;

  unsigned workers = 1;
  bool write_plots = true;
  double max_abort_fraction = 0.05;
  double coverage_level = 0.95;

  bool record_probes = true;
  std::uint64_t probe_dense_until = 10000;
  double probe_growth = 1.02;
  /// Window for the per-replication M_t increment slope, as fractions of n_max.
  double stabilization_window_low = 0.01;
  /// Keep every TrajectoryRecord in the result (memory O(reps * probes)).
  bool keep_records = false;

  SaturatorSweep saturator;

  std::uint64_t n_max() const { return n_grid.empty() ? 0 : n_grid.back(); }
  void validate() const;
};

/// Desk-scale defaults for each experiment; `full_scale` switches to the full grid.
ExperimentSpec default_spec(ExperimentKind kind, bool full_scale = false);

/// Overrides spec fields from a config file. Keys:
///   experiment, dims, regimes, methods, n_min, n_max, points_per_decade,
///   replications, seed, output_dir, eta0, alpha, clip_norm (number or none),
///   input, epsilon, ridge_before_map, gain (sa_over_t | sa_shifted), gain_c,
///   driver_clip (lo,hi or none), noise_target_ratio, data, ridge, workers,
///   plots, coverage_level, probe_dense_until, probe_growth,
///   saturator_alphas, saturator_betas, saturator_m0, saturator_c_m,
///   saturator_c_delta, saturator_eta0, saturator_n_min, saturator_n_max,
///   saturator_per_decade
void apply_config(ExperimentSpec& spec, const KeyValueConfig& cfg);

/// Canonical key/value view of a spec, recorded in metadata.
KeyValueConfig spec_to_config(const ExperimentSpec& spec);

struct ExperimentRow {
  std::string method;
  std::size_t dim = 0;
  std::string regime;
  std::uint64_t n = 0;
  std::uint64_t replication = 0;
  double coverage = 0.0;
  double nmse = 0.0;
  double sqrt_n_rn = 0.0;
  double identity_gap = 0.0;  // relative: gap / max(1, ||xbar_n - x*||)
};

struct Stat {
  double mean = 0.0;
  double se = 0.0;
};

struct AggregateRow {
  std::string method;
  std::size_t dim = 0;
  std::string regime;
  std::uint64_t n = 0;
  std::size_t count = 0;
  Stat coverage, nmse, sqrt_n_rn, identity_gap;
};

struct StabilizationRow {
  std::string method;
  std::size_t dim = 0;
  std::string regime;
  std::uint64_t replication = 0;
  std::optional<double> mt_increment_slope;  // absent when increments vanish (identity)
  double terminal_drift_norm = 0.0;           // ||M_{n_max}||_op
  std::uint64_t clipped_steps = 0;
  std::uint64_t clipped_after_100 = 0;
};

struct GroupSummary {
  std::string method;
  std::size_t dim = 0;
  std::string regime;
  std::size_t replications = 0;
  std::size_t aborted = 0;
  std::uint64_t terminal_n = 0;
  double coverage = 0.0;
  double nmse = 0.0;
  double sqrt_n_rn = 0.0;
  double max_identity_gap = 0.0;
  std::optional<SlopeFit> slope_full;
  std::optional<SlopeFit> slope_second_half;
  std::optional<double> mt_increment_slope;
  double clipped_fraction_after_100 = 0.0;
};

struct JobInfo {
  std::size_t method_index = 0;
  std::size_t dim_index = 0;
  std::size_t regime_index = 0;
  std::uint64_t replication = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::size_t dim = 0;
  std::string regime;
};

struct SaturatorRow {
  double alpha = 0.0;
  double beta = 0.0;
  RemainderSplit split;
};

struct SaturatorSlope {
  double alpha = 0.0;
  double beta = 0.0;
  double predicted = 0.0;  // (alpha+1)/2 - beta
  SlopeFit fit;
  double side_ratio = 0.0;  // (|B|+|S|)/D at the last grid point
  bool hypotheses_ok = false;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<JobInfo> jobs;
  std::vector<ExperimentRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<StabilizationRow> stabilization;
  std::vector<GroupSummary> summary;
  std::vector<SaturatorRow> saturator;
  std::vector<SaturatorSlope> saturator_slopes;
  std::vector<std::pair<std::string, std::string>> problem_info;
  std::size_t aborted = 0;
  std::vector<std::string> abort_log;
  bool failed = false;
  std::string failure;
  double elapsed_seconds = 0.0;
  /// Filled when spec.keep_records is set; aligned with `jobs`.
  std::vector<TrajectoryRecord> records;
};

/// Problem for one (dim, regime) cell of a spec.
ProblemPtr build_problem(const ExperimentSpec& spec, std::size_t dim, Regime regime);

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Aggregates recomputed from rows alone (mean and standard error per key,
/// keys in sorted order).
std::vector<AggregateRow> aggregate_rows(const std::vector<ExperimentRow>& rows);

/// Runs `body(i)` for i in [0, count) on `workers` threads. The first
/// exception thrown by any task is rethrown after all threads join.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace psgd::harness
