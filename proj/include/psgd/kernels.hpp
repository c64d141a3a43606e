#pragma once

// Inner-loop arithmetic kernels.
//
// Every kernel has a scalar reference implementation. On x86-64 builds an
// AVX2/FMA variant is compiled separately and picked at runtime when the CPU
// supports it. The PSGD_KERNELS environment variable ("scalar", "avx2",
// "auto") overrides the choice at first use. Results of the two variants agree
// to rounding; tests pin the equivalence.

#include <cstddef>
#include <string_view>
#include <vector>

namespace psgd::kernels {

struct KernelTable {
  const char* name;

  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);

  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // y = A x, A row-major rows x cols
  void (*gemv)(const double* a, const double* x, double* y, std::size_t rows,
               std::size_t cols);

  // C = A B, A is m x k, B is k x n, all row-major. C must not alias A or B.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n);

  // acc = keep * acc + weight * (w w^T + shift I), acc is d x d row-major.
  void (*blend_rank1)(double* acc, double keep, double weight, const double* w,
                      double shift, std::size_t d);

  // acc = keep * acc + weight * src, elementwise over n entries.
  void (*blend)(double* acc, double keep, double weight, const double* src,
                std::size_t n);

  // out[i] = 1 / (1 + exp(-margin[i])) - label[i]
  void (*logistic_residuals)(const double* margin, const double* label,
                             double* out, std::size_t n);
};

/// Table selected for this process (resolved once, thread-safe).
const KernelTable& active();

const KernelTable& scalar_table();

/// AVX2 table if compiled in and supported by the running CPU, else nullptr.
const KernelTable* avx2_table();

/// Force a table by name ("scalar", "avx2", "auto"). Intended for tests and
/// the CLI; call before spawning workers. Returns false if unavailable.
bool select(std::string_view name);

/// Names of the tables usable on this machine.
std::vector<std::string_view> available();

}  // namespace psgd::kernels
