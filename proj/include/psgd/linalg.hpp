#pragma once

// Dense small-dimension linear algebra (d <= 64). Symmetric eigenproblems are
// solved by cyclic Jacobi rotations; spectral maps, operator norms and Loewner
// comparisons are built on top of that.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace psgd {

using Vector = std::vector<double>;

/// Raised when a matrix is too close to singular for the requested map, or
/// when an eigen-iteration fails to converge.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t dim);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector diag() const;
  Matrix transpose() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

/// y = A x into a caller-owned buffer (no allocation).
void matvec_into(const Matrix& a, std::span<const double> x, std::span<double> y);
/// C = A B into a caller-owned matrix of the right shape.
void matmul_into(const Matrix& a, const Matrix& b, Matrix& c);

double frobenius_norm(const Matrix& a);
double norm2(std::span<const double> x);
double max_abs_asymmetry(const Matrix& a);

/// Eigen-decomposition of a symmetric matrix: eigenvalues ascending, the
/// matching orthonormal eigenvectors stored as columns.
struct Spectrum {
  Vector eigenvalues;
  Matrix eigenvectors;

  std::size_t dim() const { return eigenvalues.size(); }
  double min() const { return eigenvalues.front(); }
  double max() const { return eigenvalues.back(); }
};

/// Cyclic Jacobi on the symmetric part of `a`. Stops once the off-diagonal
/// Frobenius mass is below 1e-13 * ||a||_F. If `warm_basis` is given (an
/// orthonormal matrix, typically the eigenvectors of a nearby matrix), the
/// iteration starts from warm_basis^T a warm_basis.
Spectrum eigen_symmetric(const Matrix& a, const Matrix* warm_basis = nullptr);

/// In-place form: uses s.eigenvectors as the warm basis (when shaped d x d)
/// and overwrites `s` with the decomposition of `a`. No heap allocation
/// once the per-thread workspace has grown to size.
void eigen_symmetric_update(const Matrix& a, Spectrum& s);

/// Q diag(values) Q^T for the eigenvectors of `s`; exactly symmetric.
Matrix reconstruct(const Spectrum& s, std::span<const double> values);
/// Allocation-free form of reconstruct; `out` must already be dim x dim.
void reconstruct_into(const Spectrum& s, std::span<const double> values, Matrix& out);

enum class SpectralMap { Inverse, InverseSqrt, Sqrt };

/// Eigenvalue below this is treated as singular by the inverse maps.
inline constexpr double kSingularTolerance = 1e-14;

/// Symmetric positive-definite matrix with its eigen-decomposition attached.
class SpdMatrix {
 public:
  /// Symmetrizes (A + A^T)/2. Throws std::invalid_argument when asymmetry
  /// exceeds 1e-8 relative to ||A||_F or when the smallest eigenvalue is <= 0.
  explicit SpdMatrix(const Matrix& a);

  /// Builds Q diag(eigenvalues) Q^T from an existing decomposition; no
  /// re-factorization. Eigenvalues must be positive.
  static SpdMatrix from_spectrum(Spectrum s);
  static SpdMatrix identity(std::size_t dim);

  std::size_t dim() const { return matrix_.rows(); }
  const Matrix& matrix() const { return matrix_; }
  const Spectrum& spectrum() const { return spectrum_; }
  double operator()(std::size_t i, std::size_t j) const { return matrix_(i, j); }
  double min_eigenvalue() const { return spectrum_.min(); }
  double max_eigenvalue() const { return spectrum_.max(); }
  double condition_number() const { return spectrum_.max() / spectrum_.min(); }

 private:
  SpdMatrix(Matrix m, Spectrum s) : matrix_(std::move(m)), spectrum_(std::move(s)) {}

  Matrix matrix_;
  Spectrum spectrum_;
};

/// Entry (j,k) = r^|j-k|, 0 < r < 1.
SpdMatrix toeplitz_corr(std::size_t dim, double r);

/// Q f(Lambda) Q^T with f one of x^-1, x^-1/2, x^1/2.
SpdMatrix spectral_map(const SpdMatrix& a, SpectralMap map);

/// Scalar image of one eigenvalue under the map; throws NumericalError below
/// kSingularTolerance for the inverse maps.
double apply_map(SpectralMap map, double lambda);

/// Largest singular value. Uses the eigenvalues directly for exactly
/// symmetric input.
double op_norm(const Matrix& a);

/// True iff lambda_min(B - A) >= -tol.
bool loewner_leq(const Matrix& a, const Matrix& b, double tol);

/// Lower Cholesky factor L with L L^T = A.
Matrix cholesky_lower(const SpdMatrix& a);

}  // namespace psgd
