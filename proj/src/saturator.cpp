#include "psgd/saturator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psgd {

double SaturatingSequences::eta(std::uint64_t t) const { return eta0 * std::pow(static_cast<double>(t), -alpha); }

double SaturatingSequences::delta(std::uint64_t t) const {
  const double mag = c_delta * std::pow(static_cast<double>(t), -alpha / 2.0);
  return (t % 2 == 0) ? mag : -mag;
}

double SaturatingSequences::drift(std::uint64_t t) const {
  long double acc = 0.0L;
  for (std::uint64_t s = 2; s <= t; ++s) {
    const long double term = std::pow(static_cast<long double>(s), -static_cast<long double>(beta));
    acc += (s % 2 == 0) ? term : -term;
  }
  return static_cast<double>(m0 + c_m * acc);
}

void SaturatingSequences::validate() const {
  if (!(alpha > 0.5 && alpha < 1.0)) throw std::invalid_argument("saturator: alpha must be in (1/2, 1)");
  if (!(beta > 0.0)) throw std::invalid_argument("saturator: beta must be positive");
  if (!(m0 > 0.0 && c_m > 0.0 && c_delta > 0.0 && eta0 > 0.0))
    throw std::invalid_argument("saturator: constants must be positive");
}

double alternating_sup(double beta) { return std::pow(2.0, -beta); }

double RemainderSplit::scaled() const { return std::sqrt(static_cast<double>(n)) * r; }

namespace {

// Walks t = 1, 2, ... keeping the running sums in extended precision and
// calls `emit(n, split)` after each step n >= 2.
template <typename Emit>
void walk(const SaturatingSequences& seq, std::uint64_t n_max, Emit&& emit) {
  seq.validate();
  using ld = long double;
  const ld beta = seq.beta;
  ld m_prev = seq.m0;  // M_1
  ld inv_eta_prev = 1.0L / seq.eta(1);
  const ld a1d1 = inv_eta_prev * m_prev * seq.delta(1);
  ld s_sum = 0.0L, d_sum = 0.0L;
  for (std::uint64_t t = 2; t <= n_max; ++t) {
    const ld inc = std::pow(static_cast<ld>(t), -beta) * seq.c_m;
    const ld m_t = m_prev + ((t % 2 == 0) ? inc : -inc);
    const ld inv_eta = 1.0L / seq.eta(t);
    const ld delta_t = seq.delta(t);
    s_sum += (inv_eta - inv_eta_prev) * m_t * delta_t;
    d_sum += inv_eta_prev * (m_t - m_prev) * delta_t;
    const ld n = static_cast<ld>(t);
    const ld b = (a1d1 - inv_eta * m_t * seq.delta(t + 1)) / n;
    RemainderSplit out;
    out.n = t;
    out.b = static_cast<double>(b);
    out.s = static_cast<double>(s_sum / n);
    out.d = static_cast<double>(d_sum / n);
    out.r = static_cast<double>(b + s_sum / n + d_sum / n);
    if (!emit(t, out, static_cast<double>(m_t), static_cast<double>(m_t - m_prev))) return;
    m_prev = m_t;
    inv_eta_prev = inv_eta;
  }
}

}  // namespace

RemainderSplit eval_remainder(const SaturatingSequences& seq, std::uint64_t n) {
  if (n < 2) throw std::invalid_argument("eval_remainder: n must be at least 2");
  RemainderSplit result;
  walk(seq, n, [&](std::uint64_t t, const RemainderSplit& s, double, double) {
    if (t == n) result = s;
    return true;
  });
  return result;
}

std::vector<RemainderSplit> eval_remainder_grid(const SaturatingSequences& seq, std::span<const std::uint64_t> grid) {
  if (grid.empty()) return {};
  if (!std::is_sorted(grid.begin(), grid.end()) || grid.front() < 2)
    throw std::invalid_argument("eval_remainder_grid: grid must be sorted with entries >= 2");
  std::vector<RemainderSplit> out;
  out.reserve(grid.size());
  std::size_t next = 0;
  walk(seq, grid.back(), [&](std::uint64_t t, const RemainderSplit& s, double, double) {
    while (next < grid.size() && grid[next] == t) {
      out.push_back(s);
      ++next;
    }
    return next < grid.size();
  });
  return out;
}

HypothesisReport verify_hypotheses(const SaturatingSequences& seq, std::uint64_t n_max) {
  if (n_max < 2) throw std::invalid_argument("verify_hypotheses: n_max must be at least 2");
  HypothesisReport rep;
  rep.n_max = n_max;
  const double cb = alternating_sup(seq.beta);
  rep.band_low = seq.m0 - seq.c_m * cb;
  rep.band_high = seq.m0 + seq.c_m * cb;
  rep.band_positive = rep.band_low > 0.0;
  rep.drift_min = rep.drift_max = seq.m0;
  rep.dynamic_positive = true;
  rep.max_delta_error = std::abs(std::abs(seq.delta(1)) / seq.c_delta - 1.0);
  walk(seq, n_max, [&](std::uint64_t t, const RemainderSplit& s, double m_t, double inc) {
    const double target = seq.c_m * std::pow(static_cast<double>(t), -seq.beta);
    rep.max_increment_error = std::max(rep.max_increment_error, std::abs(std::abs(inc) / target - 1.0));
    const double dmag = seq.c_delta * std::pow(static_cast<double>(t), -seq.alpha / 2.0);
    rep.max_delta_error = std::max(rep.max_delta_error, std::abs(std::abs(seq.delta(t)) / dmag - 1.0));
    rep.drift_min = std::min(rep.drift_min, m_t);
    rep.drift_max = std::max(rep.drift_max, m_t);
    if (!(s.d > 0.0)) rep.dynamic_positive = false;
    return true;
  });
  const double slack = 1e-12 * std::max(1.0, std::abs(seq.m0));
  rep.drift_in_band = rep.drift_min >= rep.band_low - slack && rep.drift_max <= rep.band_high + slack;
  return rep;
}

}  // namespace psgd
