#pragma once

// Preconditioner rules behind one state type.
//
//   identity     P_t = I
//   sa_adagrad   C_t = (1-rho_t) C_{t-1} + rho_t (W_t + eps I),  P_t = C_{t-1}^{-1/2}
//   sa_rmsprop   v_t = (1-rho_t) v_{t-1} + rho_t (w_t + eps 1),  P_t = Diag(v_{t-1})^{-1/2}
//   sa_ons       B_t = (1-rho_t) B_{t-1} + rho_t W_t,            P_t = B_{t-1}^{-1}
//   ema_rmsprop  sa_rmsprop with a constant gain
//
// W_t is g_t g_t^T (gradient input) or the Hessian estimate (Hessian input);
// w_t is its diagonal. Accumulators start at eps I / eps 1. With
// `ridge_before_map` the eps I shift is folded into every driver including
// SA-ONS, so eps acts as a constant ridge floor.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psgd/linalg.hpp"

namespace psgd {

enum class Rule { Identity, SaAdagrad, SaRmsprop, SaOns, EmaRmsprop };
enum class InputMode { Gradient, Hessian };
enum class GainKind { SaOverT, SaShifted, Constant };

std::string_view to_string(Rule r);
Rule parse_rule(std::string_view s);
std::string_view to_string(InputMode m);
InputMode parse_input_mode(std::string_view s);

struct GainSchedule {
  GainKind kind = GainKind::SaShifted;
  double c = 1.0;
  double rho = 0.5;

  static GainSchedule sa_over_t(double c = 1.0) { return {GainKind::SaOverT, c, 0.0}; }
  static GainSchedule sa_shifted(double c = 1.0) { return {GainKind::SaShifted, c, 0.0}; }
  static GainSchedule constant(double rho) { return {GainKind::Constant, 1.0, rho}; }

  /// rho_t for t >= 1.
  double gain(std::uint64_t t) const {
    switch (kind) {
      case GainKind::SaOverT: return c / static_cast<double>(t);
      case GainKind::SaShifted: return c / static_cast<double>(t + 1);
      case GainKind::Constant: return rho;
    }
    return rho;
  }
  void validate() const;
};

/// Spectral band the driver is clamped to before it enters the accumulator.
struct DriverClip {
  double lower = 0.0;
  double upper = 0.0;
};

struct PreconditionerSpec {
  Rule rule = Rule::Identity;
  InputMode input = InputMode::Hessian;
  GainSchedule schedule = GainSchedule::sa_shifted();
  double epsilon = 0.5;
  bool ridge_before_map = false;
  std::optional<DriverClip> driver_clip;

  /// Stable method label used in output files ("sa_rmsprop", "ema_rmsprop_0.5", ...).
  std::string label() const;
  bool diagonal() const { return rule == Rule::SaRmsprop || rule == Rule::EmaRmsprop; }
  bool full_matrix() const { return rule == Rule::SaAdagrad || rule == Rule::SaOns; }
  void validate() const;
};

/// What the caller supplies at step t; Hessian-input rules read the estimate,
/// gradient-input rules the gradient.
struct StepInputs {
  std::span<const double> gradient;
  const Matrix* hessian_estimate = nullptr;
};

class PreconditionerState {
 public:
  PreconditionerState(const PreconditionerSpec& spec, std::size_t dim);

  const PreconditionerSpec& spec() const { return spec_; }
  std::size_t dim() const { return dim_; }
  /// Number of updates absorbed so far; the next P is P_{steps()+1}.
  std::uint64_t steps() const { return steps_; }

  /// Current accumulator (full matrix, or the diagonal of v_t embedded in a matrix).
  Matrix accumulator() const;
  const Vector& diagonal_accumulator() const { return diag_; }
  /// Eigen-decomposition of the full accumulator (full-matrix rules only).
  const Spectrum& accumulator_spectrum() const { return spectrum_; }
  /// Lower bound the accumulator must respect at all times.
  double floor() const { return floor_; }

  /// P_{t} built from the accumulator after t-1 updates (predictable).
  SpdMatrix apply() const;
  /// P_t^{-1}, i.e. the image of the accumulator under the inverse of the map.
  Matrix inverse_apply() const;

  /// Allocation-free forms of apply / inverse_apply; `out` must be dim x dim.
  void apply_into(Matrix& out) const;
  void inverse_apply_into(Matrix& out) const;

  /// Absorb the step-t driver (t = steps()+1).
  void update(const StepInputs& in);

 private:
  void check_floor() const;

  PreconditionerSpec spec_;
  std::size_t dim_;
  std::uint64_t steps_ = 0;
  double floor_;
  Matrix full_;
  Spectrum spectrum_;
  Vector diag_;
  Matrix driver_;
  Vector driver_diag_;
  mutable Vector scratch_;
};

/// P_t; free-function form of PreconditionerState::apply.
SpdMatrix precond_apply(const PreconditionerState& state);
void precond_update(PreconditionerState& state, const StepInputs& in);

/// M_t = (P_t H)^{-1} = H^{-1} P_t^{-1}. Not symmetric in general.
Matrix effective_inverse_drift(const PreconditionerState& state, const SpdMatrix& h);
/// Same, with a precomputed H^{-1}.
Matrix effective_inverse_drift(const PreconditionerState& state, const Matrix& h_inverse);

/// Closed-form ||M_infinity||_op (gradient-input conventions):
///   identity 1/lambda_min(H); sa_ons 1; sa_adagrad ||H^{-1}(S+eps I)^{1/2}||;
///   sa_rmsprop ||H^{-1} Diag(diag S + eps)^{1/2}||. ema_rmsprop throws.
double operator_factor(Rule rule, const SpdMatrix& h, const SpdMatrix& s, double epsilon);

// ---------------------------------------------------------------------------

struct ProbeRow {
  std::uint64_t t;
  double increment;          // ||M_t - M_{t-1}||_op
  double norm;               // ||M_t||_op
  double coupled_increment;  // ||eta_t^{-1} M_t - eta_{t-1}^{-1} M_{t-1}||_op
};

/// Stabilization probes at every step up to `dense_until`, then on a
/// geometric grid with ratio `growth`.
class StabilizationProbe {
 public:
  explicit StabilizationProbe(std::uint64_t dense_until = 10000, double growth = 1.02)
      : dense_until_(dense_until), growth_(growth), next_sparse_(static_cast<double>(dense_until)) {}

  bool due(std::uint64_t t);
  void record(std::uint64_t t, const Matrix& m_t, const Matrix& m_prev, double eta_t, double eta_prev);

  const std::vector<ProbeRow>& rows() const { return rows_; }

 private:
  std::uint64_t dense_until_;
  double growth_;
  double next_sparse_;
  std::vector<ProbeRow> rows_;
};

}  // namespace psgd
