#include "psgd/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psgd {

double DecompositionTerms::scaled_remainder() const {
  return std::sqrt(static_cast<double>(n)) * norm2(dynamic_remainder);
}

DecompositionTerms compute_terms(const TrajectoryRecord& record, const Matrix& h_inverse, std::uint64_t n) {
  const Checkpoint& cp = record.at(n);
  const std::size_t d = cp.sum_xi.size();
  if (h_inverse.rows() != d || h_inverse.cols() != d)
    throw std::invalid_argument("compute_terms: H has the wrong dimension");
  const double inv_n = 1.0 / static_cast<double>(n);

  DecompositionTerms out;
  out.n = n;
  out.xi_term = h_inverse * cp.sum_xi;
  out.taylor_term = h_inverse * cp.sum_u;
  out.dynamic_remainder.resize(d);
  Vector residual(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.xi_term[i] *= -inv_n;
    out.taylor_term[i] *= -inv_n;
    out.dynamic_remainder[i] = inv_n * (cp.first_boundary[i] - cp.last_boundary[i] + cp.abel_sum[i]);
    residual[i] = cp.average_error[i] - out.xi_term[i] - out.taylor_term[i] - out.dynamic_remainder[i];
  }
  out.identity_gap = norm2(residual);
  out.relative_gap = out.identity_gap / std::max(1.0, norm2(cp.average_error));
  return out;
}

DecompositionTerms compute_terms(const TrajectoryRecord& record, const SpdMatrix& h, std::uint64_t n) {
  return compute_terms(record, spectral_map(h, SpectralMap::Inverse).matrix(), n);
}

RemainderStats mean_and_se(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_and_se: no samples");
  RemainderStats s;
  s.count = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_error = std::sqrt(ss / static_cast<double>(s.count - 1) / static_cast<double>(s.count));
  }
  return s;
}

RemainderStats scaled_remainder_stats(std::span<const DecompositionTerms> terms, std::uint64_t n) {
  if (terms.empty()) throw std::invalid_argument("scaled_remainder_stats: no replications");
  Vector values;
  values.reserve(terms.size());
  for (const auto& t : terms) {
    if (t.n != n) throw std::invalid_argument("scaled_remainder_stats: mixed checkpoints");
    values.push_back(t.scaled_remainder());
  }
  return mean_and_se(values);
}

}  // namespace psgd
