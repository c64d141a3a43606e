// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// CPU feature check.

#include <immintrin.h>

#include <cmath>

#include "psgd/kernels.hpp"

namespace psgd::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  std::size_t i = 0;
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void gemv_avx2(const double* a, const double* x, double* y, std::size_t rows,
               std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot_avx2(a + i * cols, x, cols);
}

void gemm_avx2(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t l = 0; l < k; ++l) axpy_avx2(a[i * k + l], b + l * n, ci, n);
  }
}

void blend_rank1_avx2(double* acc, double keep, double weight, const double* w,
                      double shift, std::size_t d) {
  const __m256d vkeep = _mm256_set1_pd(keep);
  for (std::size_t i = 0; i < d; ++i) {
    const double wi = weight * w[i];
    const __m256d vwi = _mm256_set1_pd(wi);
    double* row = acc + i * d;
    std::size_t j = 0;
    for (; j + 4 <= d; j += 4) {
      const __m256d r = _mm256_mul_pd(vkeep, _mm256_loadu_pd(row + j));
      _mm256_storeu_pd(row + j, _mm256_fmadd_pd(vwi, _mm256_loadu_pd(w + j), r));
    }
    for (; j < d; ++j) row[j] = keep * row[j] + wi * w[j];
    row[i] += weight * shift;
  }
}

void blend_avx2(double* acc, double keep, double weight, const double* src,
                std::size_t n) {
  const __m256d vkeep = _mm256_set1_pd(keep);
  const __m256d vw = _mm256_set1_pd(weight);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_mul_pd(vkeep, _mm256_loadu_pd(acc + i));
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(vw, _mm256_loadu_pd(src + i), r));
  }
  for (; i < n; ++i) acc[i] = keep * acc[i] + weight * src[i];
}

// Cephes-style exp: x = n ln2 + r, |r| <= ln2/2, e^r from a (2,3) Pade form.
// Inputs are clamped to [-708, 708] so 2^n stays a normal double.
inline __m256d exp_avx2(__m256d x) {
  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-708.0)), _mm256_set1_pd(708.0));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125e-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);
  const __m256d rr = _mm256_mul_pd(r, r);

  __m256d p = _mm256_set1_pd(1.26177193074810590878e-4);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300e-2));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910e-1));
  p = _mm256_mul_pd(p, r);

  __m256d q = _mm256_set1_pd(3.00198505138664455042e-6);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192e-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766e-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009e0));

  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(e, _mm256_set1_pd(2.0), _mm256_set1_pd(1.0));

  // 2^n via the 1.5 * 2^52 shifter trick (no cvtpd_epi64 on AVX2).
  const __m256d shifter = _mm256_set1_pd(6755399441055744.0);
  const __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, shifter)),
                                      _mm256_castpd_si256(shifter));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
}

void logistic_residuals_avx2(const double* margin, const double* label,
                             double* out, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp_avx2(_mm256_sub_pd(zero, _mm256_loadu_pd(margin + i)));
    const __m256d s = _mm256_div_pd(one, _mm256_add_pd(one, e));
    _mm256_storeu_pd(out + i, _mm256_sub_pd(s, _mm256_loadu_pd(label + i)));
  }
  for (; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-margin[i])) - label[i];
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{
      "avx2",           dot_avx2,   axpy_avx2,
      gemv_avx2,        gemm_avx2,  blend_rank1_avx2,
      blend_avx2,       logistic_residuals_avx2,
  };
  return table;
}

}  // namespace psgd::kernels
