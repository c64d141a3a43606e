#include <doctest.h>

#include <cmath>
#include <random>

#include "psgd/linalg.hpp"
#include "support.hpp"

using namespace psgd;
using psgd::test::lu_inverse;
using psgd::test::max_abs_diff;
using psgd::test::random_spd;

TEST_SUITE("linalg") {

TEST_CASE("toeplitz builder") {
  const SpdMatrix t2 = toeplitz_corr(2, 0.4);
  CHECK(t2(0, 0) == 1.0);
  CHECK(t2(1, 1) == 1.0);
  CHECK(t2(0, 1) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(t2(1, 0) == doctest::Approx(0.4).epsilon(1e-15));

  const SpdMatrix near_identity = toeplitz_corr(3, 1e-16);
  CHECK(max_abs_diff(near_identity.matrix(), Matrix::identity(3)) <= 1e-15);

  for (std::size_t d : {5u, 20u, 50u}) {
    const SpdMatrix t = toeplitz_corr(d, 0.4);
    CHECK(t.condition_number() <= 5.5);
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        CHECK(t(j, k) == doctest::Approx(std::pow(0.4, std::abs(static_cast<double>(j) - static_cast<double>(k)))));
  }
  CHECK_THROWS_AS(toeplitz_corr(0, 0.4), std::invalid_argument);
  CHECK_THROWS_AS(toeplitz_corr(3, 1.0), std::invalid_argument);
}

TEST_CASE("spectral maps on closed-form inputs") {
  const SpdMatrix eye = SpdMatrix::identity(4);
  CHECK(max_abs_diff(spectral_map(eye, SpectralMap::InverseSqrt).matrix(), Matrix::identity(4)) <= 1e-15);

  const SpdMatrix d49(Matrix::from_rows({{4, 0}, {0, 9}}));
  const Matrix r = spectral_map(d49, SpectralMap::InverseSqrt).matrix();
  CHECK(r(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(std::abs(r(0, 1)) <= 1e-15);

  const SpdMatrix tiny(Matrix::from_rows({{1e-15, 0}, {0, 1}}));
  CHECK_THROWS_AS(spectral_map(tiny, SpectralMap::Inverse), NumericalError);
  CHECK_THROWS_AS(spectral_map(tiny, SpectralMap::InverseSqrt), NumericalError);
  CHECK_NOTHROW(spectral_map(tiny, SpectralMap::Sqrt));
}

TEST_CASE("inverse agrees with an elimination oracle") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + gen() % 12;
    const SpdMatrix a(random_spd(d, gen, 0.2));
    const Matrix inv = spectral_map(a, SpectralMap::Inverse).matrix();
    const Matrix oracle = lu_inverse(a.matrix());
    CHECK(max_abs_diff(inv, oracle) <= 1e-10 * std::max(1.0, op_norm(oracle)));
  }
}

TEST_CASE("spectrum reconstruction and orthonormality") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t d = 1 + gen() % 20;
    const Matrix a = random_spd(d, gen, 0.01);
    const Spectrum s = eigen_symmetric(a);
    for (std::size_t k = 1; k < d; ++k) CHECK(s.eigenvalues[k - 1] <= s.eigenvalues[k]);
    const Matrix back = reconstruct(s, s.eigenvalues);
    CHECK(op_norm(back - a) <= 1e-10 * op_norm(a));
    const Matrix qtq = psgd::test::naive_mul(s.eigenvectors.transpose(), s.eigenvectors);
    CHECK(max_abs_diff(qtq, Matrix::identity(d)) <= 1e-10);
  }
}

TEST_CASE("warm start and in-place update agree with a cold solve") {
  std::mt19937_64 gen(3);
  const std::size_t d = 6;
  Matrix a = random_spd(d, gen);
  Spectrum running = eigen_symmetric(a);
  for (int step = 0; step < 40; ++step) {
    const Matrix bump = random_spd(d, gen) * 0.01;
    a += bump;
    const Spectrum cold = eigen_symmetric(a);
    const Spectrum warm = eigen_symmetric(a, &running.eigenvectors);
    eigen_symmetric_update(a, running);
    for (std::size_t k = 0; k < d; ++k) {
      CHECK(warm.eigenvalues[k] == doctest::Approx(cold.eigenvalues[k]).epsilon(1e-12));
      CHECK(running.eigenvalues[k] == doctest::Approx(cold.eigenvalues[k]).epsilon(1e-12));
    }
    CHECK(op_norm(reconstruct(running, running.eigenvalues) - a) <= 1e-11 * op_norm(a));
  }
  Spectrum empty;
  eigen_symmetric_update(a, empty);
  CHECK(empty.dim() == d);
}

TEST_CASE("operator norm") {
  CHECK(op_norm(Matrix::from_rows({{1, 0}, {0, -3}})) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(op_norm(Matrix::identity(7)) == doctest::Approx(1.0).epsilon(1e-15));
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix a = psgd::test::random_matrix(5, 5, gen);
    CHECK(op_norm(a) == doctest::Approx(psgd::test::power_iteration_norm(a)).epsilon(1e-8));
  }
}

TEST_CASE("operator norm is submultiplicative and subadditive") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + gen() % 8;
    const Matrix a = psgd::test::random_matrix(d, d, gen);
    const Matrix b = psgd::test::random_matrix(d, d, gen);
    const double na = op_norm(a), nb = op_norm(b);
    CHECK(op_norm(a * b) <= na * nb * (1 + 1e-12));
    CHECK(op_norm(a + b) <= (na + nb) * (1 + 1e-12));
  }
}

TEST_CASE("loewner order") {
  const Matrix i3 = Matrix::identity(3);
  CHECK(loewner_leq(i3, i3 * 2.0, 0.0));
  CHECK_FALSE(loewner_leq(i3 * 2.0, i3, 0.0));
  CHECK(loewner_leq(i3, i3, 0.0));
  CHECK_THROWS_AS(loewner_leq(i3, Matrix::identity(2), 0.0), std::invalid_argument);
}

TEST_CASE("square root squared returns the input") {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> logu(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + gen() % 10;
    // Q diag(10^u) Q^T with eigenvalues in [1e-3, 1e3].
    const Spectrum basis = eigen_symmetric(random_spd(d, gen));
    Vector vals(d);
    for (double& v : vals) v = std::pow(10.0, logu(gen));
    const SpdMatrix a(reconstruct(basis, vals));
    const Matrix root = spectral_map(a, SpectralMap::Sqrt).matrix();
    CHECK(frobenius_norm(root * root - a.matrix()) <= 1e-9 * frobenius_norm(a.matrix()));
  }
}

TEST_CASE("square root Lipschitz bound above a floor") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> eps_dist(0.01, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + gen() % 6;
    const double eps = eps_dist(gen);
    const SpdMatrix a(random_spd(d, gen, eps));
    const SpdMatrix b(random_spd(d, gen, eps));
    const double lhs = op_norm(spectral_map(a, SpectralMap::Sqrt).matrix() - spectral_map(b, SpectralMap::Sqrt).matrix());
    const double rhs = op_norm(a.matrix() - b.matrix()) / (2.0 * std::sqrt(eps));
    CHECK(lhs <= rhs * (1 + 1e-10) + 1e-14);
  }
}

TEST_CASE("SpdMatrix construction rules") {
  CHECK_THROWS_AS(SpdMatrix(Matrix::from_rows({{1, 0.5}, {0.4, 1}})), std::invalid_argument);
  CHECK_THROWS_AS(SpdMatrix(Matrix::from_rows({{1, 2}, {2, 1}})), std::invalid_argument);
  CHECK_THROWS_AS(SpdMatrix(Matrix(2, 3)), std::invalid_argument);
  // Tiny asymmetry is averaged away.
  const SpdMatrix s(Matrix::from_rows({{2, 1 + 1e-12}, {1, 2}}));
  CHECK(s(0, 1) == s(1, 0));
  CHECK(max_abs_asymmetry(s.matrix()) == 0.0);
}

TEST_CASE("cholesky factor") {
  std::mt19937_64 gen(8);
  const SpdMatrix a(random_spd(7, gen));
  const Matrix l = cholesky_lower(a);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = i + 1; j < 7; ++j) CHECK(l(i, j) == 0.0);
  CHECK(max_abs_diff(l * l.transpose(), a.matrix()) <= 1e-12);
}

TEST_CASE("allocation-free products match the operators") {
  std::mt19937_64 gen(9);
  const Matrix a = psgd::test::random_matrix(4, 3, gen);
  const Matrix b = psgd::test::random_matrix(3, 5, gen);
  Matrix c(4, 5);
  matmul_into(a, b, c);
  CHECK(max_abs_diff(c, psgd::test::naive_mul(a, b)) <= 1e-14);
  const Vector x{1.0, -2.0, 0.5};
  Vector y(4);
  matvec_into(a, x, y);
  CHECK(max_abs_diff(y, a * x) <= 1e-15);
  CHECK_THROWS_AS(b * a, std::invalid_argument);
}

}  // TEST_SUITE
