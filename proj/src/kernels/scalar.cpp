#include <cmath>

#include "psgd/kernels.hpp"

namespace psgd::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemv_scalar(const double* a, const double* x, double* y, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot_scalar(a + i * cols, x, cols);
}

void gemm_scalar(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t l = 0; l < k; ++l) axpy_scalar(a[i * k + l], b + l * n, ci, n);
  }
}

void blend_rank1_scalar(double* acc, double keep, double weight, const double* w,
                        double shift, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) {
    const double wi = weight * w[i];
    double* row = acc + i * d;
    for (std::size_t j = 0; j < d; ++j) row[j] = keep * row[j] + wi * w[j];
    row[i] += weight * shift;
  }
}

void blend_scalar(double* acc, double keep, double weight, const double* src,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] = keep * acc[i] + weight * src[i];
}

void logistic_residuals_scalar(const double* margin, const double* label,
                               double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = 1.0 / (1.0 + std::exp(-margin[i])) - label[i];
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",           dot_scalar,   axpy_scalar,
      gemv_scalar,        gemm_scalar,  blend_rank1_scalar,
      blend_scalar,       logistic_residuals_scalar,
  };
  return table;
}

}  // namespace psgd::kernels
