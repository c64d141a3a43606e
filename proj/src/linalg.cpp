#include "psgd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psgd/kernels.hpp"

namespace psgd {

Matrix Matrix::identity(std::size_t dim) {
  Matrix m(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
    ++i;
  }
  return m;
}

Vector Matrix::diag() const {
  Vector d(std::min(rows_, cols_));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (*this)(i, i);
  return d;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw std::invalid_argument("Matrix +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw std::invalid_argument("Matrix -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

void matmul_into(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols())
    throw std::invalid_argument("matmul: shape mismatch");
  kernels::active().gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  matmul_into(a, b, c);
  return c;
}

void matvec_into(const Matrix& a, std::span<const double> x, std::span<double> y) {
  if (a.cols() != x.size() || a.rows() != y.size())
    throw std::invalid_argument("matvec: shape mismatch");
  kernels::active().gemv(a.data(), x.data(), y.data(), a.rows(), a.cols());
}

Vector operator*(const Matrix& a, std::span<const double> x) {
  Vector y(a.rows());
  matvec_into(a, x, y);
  return y;
}

double frobenius_norm(const Matrix& a) {
  const std::size_t n = a.rows() * a.cols();
  return std::sqrt(kernels::active().dot(a.data(), a.data(), n));
}

double norm2(std::span<const double> x) {
  return std::sqrt(kernels::active().dot(x.data(), x.data(), x.size()));
}

double max_abs_asymmetry(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - a(j, i)));
  return m;
}

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kJacobiTolerance = 1e-13;

double off_diagonal_sq(const double* a, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) s += a[i * d + j] * a[i * d + j];
  return 2.0 * s;
}

// Cyclic Jacobi on the symmetric d x d array `a`, accumulating rotations into
// the columns of `v`. On return the diagonal of `a` holds the eigenvalues.
void jacobi_in_place(double* a, double* v, std::size_t d) {
  double fro = 0.0;
  for (std::size_t i = 0; i < d * d; ++i) fro += a[i] * a[i];
  const double threshold = kJacobiTolerance * std::sqrt(fro);
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (std::sqrt(off_diagonal_sq(a, d)) <= threshold) break;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double tau = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = std::abs(tau) > 1e150 ? 0.5 / tau
                                               : std::copysign(1.0, tau) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          double* row = a + k * d;
          const double akp = row[p];
          const double akq = row[q];
          row[p] = c * akp - s * akq;
          row[q] = s * akp + c * akq;
        }
        double* rp = a + p * d;
        double* rq = a + q * d;
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = rp[k];
          const double aqk = rq[k];
          rp[k] = c * apk - s * aqk;
          rq[k] = s * apk + c * aqk;
        }
        rp[q] = 0.0;
        rq[p] = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          double* row = v + k * d;
          const double vkp = row[p];
          const double vkq = row[q];
          row[p] = c * vkp - s * vkq;
          row[q] = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == kMaxSweeps) throw NumericalError("eigen_symmetric: Jacobi did not converge");
}

struct JacobiScratch {
  std::vector<double> a, v, tmp;
  std::vector<std::size_t> order;
  void resize(std::size_t d) {
    a.resize(d * d);
    v.resize(d * d);
    tmp.resize(d * d);
    order.resize(d);
  }
};

JacobiScratch& scratch() {
  thread_local JacobiScratch s;
  return s;
}

// Symmetrize `input` into ws.a; with a basis, replace it by Q^T A Q and copy Q into ws.v.
void prepare(const Matrix& input, const Matrix* basis, JacobiScratch& ws) {
  const std::size_t d = input.rows();
  ws.resize(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) ws.a[i * d + j] = 0.5 * (input(i, j) + input(j, i));
  if (!basis) {
    std::fill(ws.v.begin(), ws.v.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) ws.v[i * d + i] = 1.0;
    return;
  }
  const double* q = basis->data();
  std::copy(q, q + d * d, ws.v.begin());
  // tmp = A Q
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += ws.a[i * d + k] * q[k * d + j];
      ws.tmp[i * d + j] = acc;
    }
  // a = Q^T tmp, symmetrized
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      double acc_ij = 0.0, acc_ji = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        acc_ij += q[k * d + i] * ws.tmp[k * d + j];
        acc_ji += q[k * d + j] * ws.tmp[k * d + i];
      }
      ws.a[i * d + j] = ws.a[j * d + i] = 0.5 * (acc_ij + acc_ji);
    }
}

void write_sorted(JacobiScratch& ws, std::size_t d, Spectrum& out) {
  for (std::size_t k = 0; k < d; ++k) ws.order[k] = k;
  std::stable_sort(ws.order.begin(), ws.order.end(),
                   [&](std::size_t i, std::size_t j) { return ws.a[i * d + i] < ws.a[j * d + j]; });
  out.eigenvalues.resize(d);
  if (out.eigenvectors.rows() != d || out.eigenvectors.cols() != d) out.eigenvectors = Matrix(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t src = ws.order[k];
    out.eigenvalues[k] = ws.a[src * d + src];
    for (std::size_t i = 0; i < d; ++i) out.eigenvectors(i, k) = ws.v[i * d + src];
  }
}

}  // namespace

Spectrum eigen_symmetric(const Matrix& input, const Matrix* warm_basis) {
  if (!input.square()) throw std::invalid_argument("eigen_symmetric: matrix must be square");
  const std::size_t d = input.rows();
  if (warm_basis && (warm_basis->rows() != d || warm_basis->cols() != d))
    throw std::invalid_argument("eigen_symmetric: warm basis shape mismatch");
  JacobiScratch& ws = scratch();
  prepare(input, warm_basis, ws);
  jacobi_in_place(ws.a.data(), ws.v.data(), d);
  Spectrum out;
  write_sorted(ws, d, out);
  return out;
}

void eigen_symmetric_update(const Matrix& input, Spectrum& s) {
  if (!input.square()) throw std::invalid_argument("eigen_symmetric: matrix must be square");
  const std::size_t d = input.rows();
  const bool warm = s.eigenvectors.rows() == d && s.eigenvectors.cols() == d;
  JacobiScratch& ws = scratch();
  prepare(input, warm ? &s.eigenvectors : nullptr, ws);
  jacobi_in_place(ws.a.data(), ws.v.data(), d);
  write_sorted(ws, d, s);
}

void reconstruct_into(const Spectrum& s, std::span<const double> values, Matrix& out) {
  const std::size_t d = s.dim();
  if (values.size() != d || out.rows() != d || out.cols() != d)
    throw std::invalid_argument("reconstruct: size mismatch");
  const Matrix& q = s.eigenvectors;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += q(i, k) * values[k] * q(j, k);
      out(i, j) = acc;
      out(j, i) = acc;
    }
  }
}

Matrix reconstruct(const Spectrum& s, std::span<const double> values) {
  Matrix out(s.dim(), s.dim());
  reconstruct_into(s, values, out);
  return out;
}

SpdMatrix::SpdMatrix(const Matrix& a) {
  if (!a.square() || a.rows() == 0) throw std::invalid_argument("SpdMatrix: need a non-empty square matrix");
  const double scale = std::max(frobenius_norm(a), 1e-300);
  if (max_abs_asymmetry(a) > 1e-8 * scale)
    throw std::invalid_argument("SpdMatrix: input is not symmetric");
  const std::size_t d = a.rows();
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = 0.5 * (a(i, j) + a(j, i));
  Spectrum s = eigen_symmetric(m);
  if (!(s.min() > 0.0)) throw std::invalid_argument("SpdMatrix: matrix is not positive definite");
  matrix_ = std::move(m);
  spectrum_ = std::move(s);
}

SpdMatrix SpdMatrix::from_spectrum(Spectrum s) {
  if (s.dim() == 0 || !(s.min() > 0.0))
    throw std::invalid_argument("SpdMatrix::from_spectrum: eigenvalues must be positive");
  Matrix m = reconstruct(s, s.eigenvalues);
  return SpdMatrix(std::move(m), std::move(s));
}

SpdMatrix SpdMatrix::identity(std::size_t dim) {
  return SpdMatrix(Matrix::identity(dim), Spectrum{Vector(dim, 1.0), Matrix::identity(dim)});
}

SpdMatrix toeplitz_corr(std::size_t dim, double r) {
  if (dim == 0) throw std::invalid_argument("toeplitz_corr: dim must be positive");
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("toeplitz_corr: need 0 < r < 1");
  Matrix m(dim, dim);
  for (std::size_t j = 0; j < dim; ++j)
    for (std::size_t k = 0; k < dim; ++k)
      m(j, k) = std::pow(r, static_cast<double>(j > k ? j - k : k - j));
  return SpdMatrix(m);
}

double apply_map(SpectralMap map, double lambda) {
  switch (map) {
    case SpectralMap::Inverse:
      if (lambda < kSingularTolerance) throw NumericalError("spectral_map: near-singular matrix");
      return 1.0 / lambda;
    case SpectralMap::InverseSqrt:
      if (lambda < kSingularTolerance) throw NumericalError("spectral_map: near-singular matrix");
      return 1.0 / std::sqrt(lambda);
    case SpectralMap::Sqrt:
      return std::sqrt(std::max(lambda, 0.0));
  }
  return lambda;
}

SpdMatrix spectral_map(const SpdMatrix& a, SpectralMap map) {
  const Spectrum& s = a.spectrum();
  Spectrum out{Vector(s.dim()), s.eigenvectors};
  for (std::size_t k = 0; k < s.dim(); ++k) out.eigenvalues[k] = apply_map(map, s.eigenvalues[k]);
  // Inverse maps reverse the ordering.
  if (map != SpectralMap::Sqrt) {
    std::reverse(out.eigenvalues.begin(), out.eigenvalues.end());
    Matrix q(s.dim(), s.dim());
    for (std::size_t k = 0; k < s.dim(); ++k)
      for (std::size_t i = 0; i < s.dim(); ++i) q(i, k) = s.eigenvectors(i, s.dim() - 1 - k);
    out.eigenvectors = std::move(q);
  }
  return SpdMatrix::from_spectrum(std::move(out));
}

double op_norm(const Matrix& a) {
  if (!a.square()) {
    const Matrix ata = a.transpose() * a;
    return std::sqrt(std::max(eigen_symmetric(ata).max(), 0.0));
  }
  if (a.rows() == 0) return 0.0;
  if (max_abs_asymmetry(a) == 0.0) {
    const Spectrum s = eigen_symmetric(a);
    return std::max(std::abs(s.min()), std::abs(s.max()));
  }
  const Matrix ata = a.transpose() * a;
  return std::sqrt(std::max(eigen_symmetric(ata).max(), 0.0));
}

bool loewner_leq(const Matrix& a, const Matrix& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || !a.square())
    throw std::invalid_argument("loewner_leq: dimension mismatch");
  return eigen_symmetric(b - a).min() >= -tol;
}

Matrix cholesky_lower(const SpdMatrix& spd) {
  const Matrix& a = spd.matrix();
  const std::size_t d = a.rows();
  Matrix l(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw NumericalError("cholesky_lower: matrix is not positive definite");
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

}  // namespace psgd
