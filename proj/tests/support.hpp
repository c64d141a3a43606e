#pragma once

// Independent oracles and fixtures shared by the unit tests. Nothing here
// calls into the eigen solver, so it can check it.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "psgd/linalg.hpp"
#include "psgd/problems.hpp"

namespace psgd::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = nd(gen);
  return m;
}

/// B B^T / d + shift I.
inline Matrix random_spd(std::size_t d, std::mt19937_64& gen, double shift = 0.1) {
  const Matrix b = random_matrix(d, d, gen);
  Matrix a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += b(i, k) * b(j, k);
      a(i, j) = acc / static_cast<double>(d);
    }
  for (std::size_t i = 0; i < d; ++i) a(i, i) += shift;
  return a;
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
inline Matrix lu_inverse(const Matrix& a) {
  const std::size_t d = a.rows();
  Matrix m = a;
  Matrix inv = Matrix::identity(d);
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(m(r, c)) > std::abs(m(piv, c))) piv = r;
    for (std::size_t k = 0; k < d; ++k) {
      std::swap(m(c, k), m(piv, k));
      std::swap(inv(c, k), inv(piv, k));
    }
    const double p = m(c, c);
    for (std::size_t k = 0; k < d; ++k) {
      m(c, k) /= p;
      inv(c, k) /= p;
    }
    for (std::size_t r = 0; r < d; ++r) {
      if (r == c) continue;
      const double f = m(r, c);
      for (std::size_t k = 0; k < d; ++k) {
        m(r, k) -= f * m(c, k);
        inv(r, k) -= f * inv(c, k);
      }
    }
  }
  return inv;
}

inline Matrix naive_mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

inline Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Largest singular value by power iteration on A^T A.
inline double power_iteration_norm(const Matrix& a, int iters = 5000) {
  const Matrix ata = naive_mul(naive_transpose(a), a);
  Vector v(a.cols(), 1.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.01 * static_cast<double>(i);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector w(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) w[i] += ata(i, j) * v[j];
    double nrm = 0.0;
    for (double x : w) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) return 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / nrm;
    lambda = nrm;
  }
  return std::sqrt(lambda);
}

/// Noiseless quadratic F(x) = (x - x*)^T H (x - x*) / 2: every stochastic
/// gradient equals the population gradient and the Hessian estimate is H.
class NoiselessQuadratic final : public StreamProblem {
 public:
  NoiselessQuadratic(Vector x_star, SpdMatrix h)
      : StreamProblem(Regime::InfoEquality, std::move(x_star), h, h) {}

  void draw(CounterRng& rng, Sample& out) const override {
    out.covariate.assign(dim(), 0.0);
    out.response = rng.normal();
  }
  void gradient(const Sample&, std::span<const double> x, std::span<double> g) const override {
    full_gradient(x, g);
  }
  void hessian_estimate(const Sample&, std::span<const double>, Matrix& out) const override {
    out = hessian().matrix();
  }
  void full_gradient(std::span<const double> x, std::span<double> out) const override {
    for (std::size_t i = 0; i < dim(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim(); ++j) acc += hessian()(i, j) * (x[j] - x_star()[j]);
      out[i] = acc;
    }
  }
  bool quadratic() const override { return true; }
  std::vector<std::pair<std::string, std::string>> describe() const override { return {{"problem", "noiseless"}}; }
};

inline std::string source_path(const std::string& rel) { return std::string(PSGD_SOURCE_DIR) + "/" + rel; }

}  // namespace psgd::test
