#include "psgd/driver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "psgd/kernels.hpp"

namespace psgd {

void StepSchedule::validate() const {
  if (!(eta0 > 0.0)) throw std::invalid_argument("StepSchedule: eta0 must be positive");
  if (!(alpha > 0.5 && alpha < 1.0)) throw std::invalid_argument("StepSchedule: alpha must be in (1/2, 1)");
}

void RunConfig::validate() const {
  if (!problem) throw std::invalid_argument("RunConfig: problem is required");
  preconditioner.validate();
  steps.validate();
  if (n_max == 0) throw std::invalid_argument("RunConfig: n_max must be positive");
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end()))
    throw std::invalid_argument("RunConfig: checkpoints must be sorted");
  if (!checkpoints.empty() && (checkpoints.front() == 0 || checkpoints.back() > n_max))
    throw std::invalid_argument("RunConfig: checkpoints must lie in [1, n_max]");
  if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("RunConfig: clip_norm must be positive");
  if (x1 && x1->size() != problem->dim()) throw std::invalid_argument("RunConfig: x1 has the wrong dimension");
  if (!(probe_growth > 1.0)) throw std::invalid_argument("RunConfig: probe_growth must exceed 1");
}

const Checkpoint& TrajectoryRecord::at(std::uint64_t n) const {
  auto it = std::lower_bound(checkpoints.begin(), checkpoints.end(), n,
                             [](const Checkpoint& c, std::uint64_t v) { return c.n < v; });
  if (it == checkpoints.end() || it->n != n) throw std::out_of_range("no checkpoint at n = " + std::to_string(n));
  return *it;
}

bool TrajectoryRecord::has(std::uint64_t n) const {
  auto it = std::lower_bound(checkpoints.begin(), checkpoints.end(), n,
                             [](const Checkpoint& c, std::uint64_t v) { return c.n < v; });
  return it != checkpoints.end() && it->n == n;
}

Vector averaged_error(const TrajectoryRecord& record, std::uint64_t n) { return record.at(n).average_error; }

std::vector<std::uint64_t> log_grid(std::uint64_t n_min, std::uint64_t n_max, int per_decade) {
  if (n_min == 0 || n_max < n_min || per_decade <= 0) throw std::invalid_argument("log_grid: bad arguments");
  std::vector<std::uint64_t> out;
  const double lo = std::log10(static_cast<double>(n_min));
  for (int k = 0;; ++k) {
    const double v = std::round(std::pow(10.0, lo + static_cast<double>(k) / per_decade));
    if (v > static_cast<double>(n_max)) break;
    out.push_back(static_cast<std::uint64_t>(v));
  }
  // Drop a point crowding the terminal one so n_max is not double-weighted in fits.
  const double half_step = std::pow(10.0, 0.5 / per_decade);
  if (out.size() > 1 && out.back() < n_max && static_cast<double>(out.back()) * half_step > static_cast<double>(n_max))
    out.pop_back();
  out.push_back(n_max);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

TrajectoryRecord run_trajectory(const RunConfig& config) {
  config.validate();
  const StreamProblem& problem = *config.problem;
  const std::size_t d = problem.dim();
  const auto& k = kernels::active();
  const Vector& x_star = problem.x_star();
  const Matrix& h = problem.hessian().matrix();
  const Matrix& h_inv = problem.hessian_inverse();
  const bool hessian_input = config.preconditioner.input == InputMode::Hessian &&
                             config.preconditioner.rule != Rule::Identity;

  TrajectoryRecord rec;
  rec.method = config.preconditioner.label();
  rec.seed = config.seed;
  rec.x_star = x_star;
  if (config.keep_history) rec.history.emplace();

  Vector x(d);
  if (config.x1) {
    x = *config.x1;
  } else {
    const double shift = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i) x[i] = x_star[i] + shift;
  }

  PreconditionerState state(config.preconditioner, d);
  StabilizationProbe probe(config.probe_dense_until, config.probe_growth);
  CounterRng rng(config.seed);
  Sample sample;

  Matrix p(d, d), p_inv(d, d), m(d, d), m_prev(d, d), a(d, d), a_prev(d, d), h_est(d, d);
  Vector delta(d), delta_next(d), sum_delta(d, 0.0), sum_xi(d, 0.0), sum_u(d, 0.0);
  Vector first_boundary(d, 0.0), abel(d, 0.0);
  Vector g(d), grad_f(d), h_delta(d), step(d), a_delta(d), a_prev_delta(d);
  double eta_prev = 0.0;
  std::size_t next_cp = 0;

  for (std::size_t i = 0; i < d; ++i) delta[i] = x[i] - x_star[i];

  for (std::uint64_t t = 1; t <= config.n_max; ++t) {
    const double eta = config.steps.eta(t);
    for (std::size_t i = 0; i < d; ++i) sum_delta[i] += delta[i];

    state.apply_into(p);
    state.inverse_apply_into(p_inv);
    k.gemm(h_inv.data(), p_inv.data(), m.data(), d, d, d);
    const double inv_eta = 1.0 / eta;
    for (std::size_t i = 0; i < d * d; ++i) a.data()[i] = m.data()[i] * inv_eta;

    problem.draw(rng, sample);
    problem.gradient(sample, x, g);
    if (config.clip_norm) {
      const double gn = std::sqrt(k.dot(g.data(), g.data(), d));
      if (gn > *config.clip_norm) {
        const double s = *config.clip_norm / gn;
        for (double& v : g) v *= s;
        ++rec.clipped_steps;
        if (t > 100) ++rec.clipped_after_100;
      }
    }
    problem.full_gradient(x, grad_f);
    k.gemv(h.data(), delta.data(), h_delta.data(), d, d);
    for (std::size_t i = 0; i < d; ++i) {
      sum_xi[i] += g[i] - grad_f[i];
      sum_u[i] += grad_f[i] - h_delta[i];
    }
    if (hessian_input) problem.hessian_estimate(sample, x, h_est);

    if (rec.history) {
      rec.history->iterates.push_back(x);
      rec.history->preconditioners.push_back(p);
      rec.history->gradients.push_back(g);
      rec.history->etas.push_back(eta);
    }

    k.gemv(p.data(), g.data(), step.data(), d, d);
    k.axpy(-eta, step.data(), x.data(), d);
    for (std::size_t i = 0; i < d; ++i) delta_next[i] = x[i] - x_star[i];

    k.gemv(a.data(), delta.data(), a_delta.data(), d, d);
    if (t == 1) {
      first_boundary = a_delta;
    } else {
      k.gemv(a_prev.data(), delta.data(), a_prev_delta.data(), d, d);
      for (std::size_t i = 0; i < d; ++i) abel[i] += a_delta[i] - a_prev_delta[i];
    }
    if (config.record_probes && t >= 2 && probe.due(t)) probe.record(t, m, m_prev, eta, eta_prev);

    rec.steps_run = t;
    if (!all_finite(x) || !all_finite(sum_xi)) {
      rec.aborted = true;
      rec.abort_reason = "non-finite iterate at step " + std::to_string(t);
      break;
    }

    while (next_cp < config.checkpoints.size() && config.checkpoints[next_cp] == t) {
      Checkpoint cp;
      cp.n = t;
      cp.iterate = rec.history ? rec.history->iterates.back() : Vector(d);
      if (!rec.history)
        for (std::size_t i = 0; i < d; ++i) cp.iterate[i] = delta[i] + x_star[i];
      cp.next_error = delta_next;
      cp.average_error.resize(d);
      for (std::size_t i = 0; i < d; ++i) cp.average_error[i] = sum_delta[i] / static_cast<double>(t);
      cp.sum_xi = sum_xi;
      cp.sum_u = sum_u;
      cp.first_boundary = first_boundary;
      cp.last_boundary.resize(d);
      k.gemv(a.data(), delta_next.data(), cp.last_boundary.data(), d, d);
      cp.abel_sum = abel;
      cp.drift = m;
      cp.clipped_steps = rec.clipped_steps;
      rec.checkpoints.push_back(std::move(cp));
      ++next_cp;
    }

    try {
      state.update(StepInputs{g, hessian_input ? &h_est : nullptr});
    } catch (const NumericalError& e) {
      rec.aborted = true;
      rec.abort_reason = std::string("step ") + std::to_string(t) + ": " + e.what();
      break;
    }

    std::swap(a, a_prev);
    std::swap(m, m_prev);
    std::swap(delta, delta_next);
    eta_prev = eta;
  }

  if (rec.history && !rec.aborted) rec.history->iterates.push_back(x);
  rec.probes = probe.rows();
  return rec;
}

}  // namespace psgd
