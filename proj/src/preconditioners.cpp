#include "psgd/preconditioners.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "psgd/kernels.hpp"

namespace psgd {

std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::Identity: return "identity";
    case Rule::SaAdagrad: return "sa_adagrad";
    case Rule::SaRmsprop: return "sa_rmsprop";
    case Rule::SaOns: return "sa_ons";
    case Rule::EmaRmsprop: return "ema_rmsprop";
  }
  return "unknown";
}

Rule parse_rule(std::string_view s) {
  if (s == "identity") return Rule::Identity;
  if (s == "sa_adagrad") return Rule::SaAdagrad;
  if (s == "sa_rmsprop") return Rule::SaRmsprop;
  if (s == "sa_ons") return Rule::SaOns;
  if (s == "ema_rmsprop") return Rule::EmaRmsprop;
  throw std::invalid_argument("unknown preconditioner rule: " + std::string(s));
}

std::string_view to_string(InputMode m) { return m == InputMode::Gradient ? "gradient" : "hessian"; }

InputMode parse_input_mode(std::string_view s) {
  if (s == "gradient") return InputMode::Gradient;
  if (s == "hessian") return InputMode::Hessian;
  throw std::invalid_argument("unknown input mode: " + std::string(s));
}

void GainSchedule::validate() const {
  if (kind == GainKind::Constant) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("GainSchedule: constant rho must be in (0,1)");
  } else if (!(c > 0.0 && c <= 1.0)) {
    throw std::invalid_argument("GainSchedule: c must be in (0,1]");
  }
}

std::string PreconditionerSpec::label() const {
  std::string out(to_string(rule));
  if (rule == Rule::EmaRmsprop) {
    std::ostringstream ss;
    ss << schedule.rho;
    out += "_" + ss.str();
  }
  return out;
}

void PreconditionerSpec::validate() const {
  if (rule == Rule::Identity) return;
  schedule.validate();
  if (rule == Rule::EmaRmsprop && schedule.kind != GainKind::Constant)
    throw std::invalid_argument("ema_rmsprop requires a constant gain");
  if (rule != Rule::EmaRmsprop && schedule.kind == GainKind::Constant)
    throw std::invalid_argument(std::string(to_string(rule)) + " requires an SA gain schedule");
  if (!(epsilon > 0.0)) throw std::invalid_argument("preconditioner epsilon must be positive");
  if (rule == Rule::SaOns && input == InputMode::Gradient)
    throw std::invalid_argument("sa_ons needs Hessian-estimate input");
  if (driver_clip && !(driver_clip->lower > 0.0 && driver_clip->upper >= driver_clip->lower))
    throw std::invalid_argument("driver clip band must satisfy 0 < lower <= upper");
}

namespace {

double driver_floor(const PreconditionerSpec& spec) {
  if (spec.rule == Rule::Identity) return 0.0;
  const bool shifted = spec.rule != Rule::SaOns || spec.ridge_before_map;
  double lb = shifted ? spec.epsilon : 0.0;
  if (spec.driver_clip) lb = std::min(std::max(lb, spec.driver_clip->lower), spec.driver_clip->upper);
  return std::min(lb, spec.epsilon);
}

SpectralMap map_for(Rule r) { return r == Rule::SaOns ? SpectralMap::Inverse : SpectralMap::InverseSqrt; }

}  // namespace

PreconditionerState::PreconditionerState(const PreconditionerSpec& spec, std::size_t dim)
    : spec_(spec), dim_(dim), floor_(driver_floor(spec)) {
  spec_.validate();
  if (dim == 0) throw std::invalid_argument("PreconditionerState: dim must be positive");
  if (spec_.full_matrix()) {
    full_ = Matrix::identity(dim) * spec_.epsilon;
    spectrum_ = Spectrum{Vector(dim, spec_.epsilon), Matrix::identity(dim)};
    driver_ = Matrix(dim, dim);
  } else if (spec_.diagonal()) {
    diag_.assign(dim, spec_.epsilon);
    driver_diag_.assign(dim, 0.0);
  }
}

Matrix PreconditionerState::accumulator() const {
  if (spec_.full_matrix()) return full_;
  if (spec_.diagonal()) return Matrix::diagonal(diag_);
  return Matrix::identity(dim_);
}

SpdMatrix PreconditionerState::apply() const {
  switch (spec_.rule) {
    case Rule::Identity: return SpdMatrix::identity(dim_);
    case Rule::SaAdagrad:
    case Rule::SaOns: {
      const SpectralMap map = map_for(spec_.rule);
      Spectrum s{Vector(dim_), Matrix(dim_, dim_)};
      // Decreasing maps reverse the eigenvalue order.
      for (std::size_t k = 0; k < dim_; ++k) {
        const std::size_t src = dim_ - 1 - k;
        s.eigenvalues[k] = apply_map(map, spectrum_.eigenvalues[src]);
        for (std::size_t i = 0; i < dim_; ++i) s.eigenvectors(i, k) = spectrum_.eigenvectors(i, src);
      }
      return SpdMatrix::from_spectrum(std::move(s));
    }
    case Rule::SaRmsprop:
    case Rule::EmaRmsprop: {
      std::vector<std::size_t> order(dim_);
      for (std::size_t i = 0; i < dim_; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return diag_[a] > diag_[b]; });
      Spectrum s{Vector(dim_), Matrix(dim_, dim_)};
      for (std::size_t k = 0; k < dim_; ++k) {
        s.eigenvalues[k] = apply_map(SpectralMap::InverseSqrt, diag_[order[k]]);
        s.eigenvectors(order[k], k) = 1.0;
      }
      return SpdMatrix::from_spectrum(std::move(s));
    }
  }
  throw std::logic_error("PreconditionerState::apply: unknown rule");
}

Matrix PreconditionerState::inverse_apply() const {
  switch (spec_.rule) {
    case Rule::Identity: return Matrix::identity(dim_);
    case Rule::SaOns: return full_;
    case Rule::SaAdagrad: {
      Vector roots(dim_);
      for (std::size_t k = 0; k < dim_; ++k) roots[k] = std::sqrt(spectrum_.eigenvalues[k]);
      return reconstruct(spectrum_, roots);
    }
    case Rule::SaRmsprop:
    case Rule::EmaRmsprop: {
      Matrix m(dim_, dim_);
      for (std::size_t i = 0; i < dim_; ++i) m(i, i) = std::sqrt(diag_[i]);
      return m;
    }
  }
  throw std::logic_error("PreconditionerState::inverse_apply: unknown rule");
}

void PreconditionerState::apply_into(Matrix& out) const {
  std::fill(out.data(), out.data() + dim_ * dim_, 0.0);
  switch (spec_.rule) {
    case Rule::Identity:
      for (std::size_t i = 0; i < dim_; ++i) out(i, i) = 1.0;
      return;
    case Rule::SaAdagrad:
    case Rule::SaOns: {
      const SpectralMap map = map_for(spec_.rule);
      scratch_.resize(dim_);
      for (std::size_t k = 0; k < dim_; ++k) scratch_[k] = apply_map(map, spectrum_.eigenvalues[k]);
      reconstruct_into(spectrum_, scratch_, out);
      return;
    }
    case Rule::SaRmsprop:
    case Rule::EmaRmsprop:
      for (std::size_t i = 0; i < dim_; ++i) out(i, i) = apply_map(SpectralMap::InverseSqrt, diag_[i]);
      return;
  }
}

void PreconditionerState::inverse_apply_into(Matrix& out) const {
  switch (spec_.rule) {
    case Rule::SaOns:
      std::copy(full_.data(), full_.data() + dim_ * dim_, out.data());
      return;
    case Rule::SaAdagrad:
      scratch_.resize(dim_);
      for (std::size_t k = 0; k < dim_; ++k) scratch_[k] = std::sqrt(spectrum_.eigenvalues[k]);
      reconstruct_into(spectrum_, scratch_, out);
      return;
    case Rule::Identity:
    case Rule::SaRmsprop:
    case Rule::EmaRmsprop:
      std::fill(out.data(), out.data() + dim_ * dim_, 0.0);
      for (std::size_t i = 0; i < dim_; ++i) out(i, i) = spec_.rule == Rule::Identity ? 1.0 : std::sqrt(diag_[i]);
      return;
  }
}

void PreconditionerState::update(const StepInputs& in) {
  const std::uint64_t t = steps_ + 1;
  if (spec_.rule == Rule::Identity) {
    steps_ = t;
    return;
  }
  const double rho = spec_.schedule.gain(t);
  const double keep = 1.0 - rho;
  const auto& k = kernels::active();
  const bool shift = spec_.rule != Rule::SaOns || spec_.ridge_before_map;
  const double eps = shift ? spec_.epsilon : 0.0;

  const Matrix* h = in.hessian_estimate;
  if (spec_.input == InputMode::Hessian) {
    if (!h || h->rows() != dim_ || h->cols() != dim_)
      throw std::invalid_argument("precond_update: Hessian estimate required");
    if (max_abs_asymmetry(*h) > 1e-8 * std::max(frobenius_norm(*h), 1e-300))
      throw std::invalid_argument("precond_update: Hessian estimate is not symmetric");
  } else if (in.gradient.size() != dim_) {
    throw std::invalid_argument("precond_update: gradient required");
  }

  if (spec_.full_matrix()) {
    if (spec_.input == InputMode::Gradient && !spec_.driver_clip) {
      k.blend_rank1(full_.data(), keep, rho, in.gradient.data(), eps, dim_);
    } else {
      if (spec_.input == InputMode::Gradient) {
        for (std::size_t i = 0; i < dim_; ++i)
          for (std::size_t j = 0; j < dim_; ++j) driver_(i, j) = in.gradient[i] * in.gradient[j];
      } else {
        driver_ = *h;
      }
      for (std::size_t i = 0; i < dim_; ++i) driver_(i, i) += eps;
      if (spec_.driver_clip) {
        Spectrum ds = eigen_symmetric(driver_);
        for (double& v : ds.eigenvalues) v = std::clamp(v, spec_.driver_clip->lower, spec_.driver_clip->upper);
        reconstruct_into(ds, ds.eigenvalues, driver_);
      }
      k.blend(full_.data(), keep, rho, driver_.data(), dim_ * dim_);
    }
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = i + 1; j < dim_; ++j) full_(i, j) = full_(j, i) = 0.5 * (full_(i, j) + full_(j, i));
    eigen_symmetric_update(full_, spectrum_);
  } else {
    for (std::size_t i = 0; i < dim_; ++i) {
      const double w = spec_.input == InputMode::Gradient ? in.gradient[i] * in.gradient[i] : (*h)(i, i);
      double v = w + eps;
      if (spec_.driver_clip) v = std::clamp(v, spec_.driver_clip->lower, spec_.driver_clip->upper);
      driver_diag_[i] = v;
    }
    k.blend(diag_.data(), keep, rho, driver_diag_.data(), dim_);
  }
  steps_ = t;
  check_floor();
}

void PreconditionerState::check_floor() const {
  const double slack = 1e-10;
  if (spec_.full_matrix()) {
    const double lo = spectrum_.min();
    if (!(lo > 0.0) || lo < floor_ * (1.0 - slack) - 1e-300 || !std::isfinite(spectrum_.max()))
      throw NumericalError("preconditioner accumulator breached its spectral floor");
  } else if (spec_.diagonal()) {
    for (double v : diag_)
      if (!(v > 0.0) || v < floor_ * (1.0 - slack) || !std::isfinite(v))
        throw NumericalError("preconditioner accumulator breached its floor");
  }
}

SpdMatrix precond_apply(const PreconditionerState& state) { return state.apply(); }

void precond_update(PreconditionerState& state, const StepInputs& in) { state.update(in); }

Matrix effective_inverse_drift(const PreconditionerState& state, const Matrix& h_inverse) {
  return h_inverse * state.inverse_apply();
}

Matrix effective_inverse_drift(const PreconditionerState& state, const SpdMatrix& h) {
  return effective_inverse_drift(state, spectral_map(h, SpectralMap::Inverse).matrix());
}

double operator_factor(Rule rule, const SpdMatrix& h, const SpdMatrix& s, double epsilon) {
  if (h.dim() != s.dim()) throw std::invalid_argument("operator_factor: dimension mismatch");
  switch (rule) {
    case Rule::Identity: return 1.0 / h.min_eigenvalue();
    case Rule::SaOns: return 1.0;
    case Rule::SaAdagrad: {
      const SpdMatrix shifted(s.matrix() + Matrix::identity(s.dim()) * epsilon);
      const Matrix m = spectral_map(h, SpectralMap::Inverse).matrix() * spectral_map(shifted, SpectralMap::Sqrt).matrix();
      return op_norm(m);
    }
    case Rule::SaRmsprop: {
      Matrix root(s.dim(), s.dim());
      for (std::size_t i = 0; i < s.dim(); ++i) root(i, i) = std::sqrt(s(i, i) + epsilon);
      return op_norm(spectral_map(h, SpectralMap::Inverse).matrix() * root);
    }
    case Rule::EmaRmsprop:
      throw std::invalid_argument("operator_factor: ema_rmsprop has no asymptotic factor");
  }
  throw std::logic_error("operator_factor: unknown rule");
}

bool StabilizationProbe::due(std::uint64_t t) {
  if (t < 2) return false;
  if (t <= dense_until_) return true;
  if (static_cast<double>(t) >= next_sparse_) {
    while (next_sparse_ <= static_cast<double>(t)) next_sparse_ *= growth_;
    return true;
  }
  return false;
}

void StabilizationProbe::record(std::uint64_t t, const Matrix& m_t, const Matrix& m_prev, double eta_t,
                                double eta_prev) {
  const Matrix coupled = m_t * (1.0 / eta_t) - m_prev * (1.0 / eta_prev);
  rows_.push_back(ProbeRow{t, op_norm(m_t - m_prev), op_norm(m_t), op_norm(coupled)});
}

}  // namespace psgd
