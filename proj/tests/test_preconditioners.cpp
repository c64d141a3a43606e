#include <doctest.h>

#include <cmath>
#include <random>

#include "psgd/preconditioners.hpp"
#include "support.hpp"

using namespace psgd;
using psgd::test::lu_inverse;
using psgd::test::max_abs_diff;
using psgd::test::random_spd;

namespace {

PreconditionerSpec make_spec(Rule rule, InputMode input, GainSchedule gain, double eps, bool ridge = false) {
  PreconditionerSpec s;
  s.rule = rule;
  s.input = input;
  s.schedule = gain;
  s.epsilon = eps;
  s.ridge_before_map = ridge;
  return s;
}

Vector random_gradient(std::size_t d, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector g(d);
  for (double& v : g) v = nd(gen);
  return g;
}

}  // namespace

TEST_SUITE("preconditioners") {

TEST_CASE("gain schedules") {
  CHECK(GainSchedule::sa_over_t(0.5).gain(4) == 0.125);
  CHECK(GainSchedule::sa_shifted().gain(1) == 0.5);
  CHECK(GainSchedule::sa_shifted().gain(9) == 0.1);
  CHECK(GainSchedule::constant(0.999).gain(12345) == 0.999);
  CHECK_THROWS_AS(GainSchedule::constant(1.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(GainSchedule::sa_over_t(1.5).validate(), std::invalid_argument);
  CHECK_THROWS_AS(GainSchedule::sa_over_t(0.0).validate(), std::invalid_argument);
}

TEST_CASE("closed-form first steps") {
  PreconditionerState id(make_spec(Rule::Identity, InputMode::Gradient, GainSchedule::sa_shifted(), 1.0), 3);
  CHECK(id.apply().matrix() == Matrix::identity(3));
  id.update(StepInputs{Vector{5, 5, 5}});
  CHECK(id.apply().matrix() == Matrix::identity(3));

  PreconditionerState ada(make_spec(Rule::SaAdagrad, InputMode::Gradient, GainSchedule::sa_shifted(), 0.25), 4);
  CHECK(max_abs_diff(ada.apply().matrix(), Matrix::identity(4) * 2.0) <= 1e-15);

  PreconditionerState ons(make_spec(Rule::SaOns, InputMode::Hessian, GainSchedule::sa_shifted(), 1.0), 1);
  const Matrix two = Matrix::from_rows({{2.0}});
  ons.update(StepInputs{{}, &two});
  CHECK(ons.accumulator()(0, 0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(ons.apply()(0, 0) == doctest::Approx(1.0 / 1.5).epsilon(1e-15));

  PreconditionerState rms(make_spec(Rule::SaRmsprop, InputMode::Gradient, GainSchedule::sa_shifted(), 0.5), 1);
  rms.update(StepInputs{Vector{2.0}});
  CHECK(rms.diagonal_accumulator()[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(rms.apply()(0, 0) == doctest::Approx(1.0 / std::sqrt(2.5)).epsilon(1e-15));
}

TEST_CASE("unit first gain replaces the accumulator by the driver") {
  const Vector g{1.0, -2.0, 0.5};
  PreconditionerState ada(make_spec(Rule::SaAdagrad, InputMode::Gradient, GainSchedule::sa_over_t(1.0), 0.3), 3);
  ada.update(StepInputs{g});
  Matrix driver(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) driver(i, j) = g[i] * g[j] + (i == j ? 0.3 : 0.0);
  CHECK(max_abs_diff(ada.accumulator(), driver) <= 1e-15);

  PreconditionerState rms(make_spec(Rule::SaRmsprop, InputMode::Gradient, GainSchedule::sa_over_t(1.0), 0.3), 3);
  rms.update(StepInputs{g});
  for (std::size_t i = 0; i < 3; ++i) CHECK(rms.diagonal_accumulator()[i] == doctest::Approx(g[i] * g[i] + 0.3));
}

TEST_CASE("constant driver: geometric and running-average convergence") {
  const Matrix w = Matrix::from_rows({{3.0, 1.0}, {1.0, 2.0}});
  const double eps = 0.5;
  // Hessian-input SA-ONS without ridge sees the driver W itself.
  for (double c : {1.0, 0.5, 0.2}) {
    PreconditionerState s(make_spec(Rule::SaOns, InputMode::Hessian, GainSchedule::sa_over_t(c), eps), 2);
    double keep = 1.0;
    for (std::uint64_t t = 1; t <= 400; ++t) {
      s.update(StepInputs{{}, &w});
      keep *= 1.0 - c / static_cast<double>(t);
      // C_t - W = prod_{s<=t} (1 - c/s) (C_0 - W)
      const Matrix expected = w + (Matrix::identity(2) * eps - w) * keep;
      CHECK(max_abs_diff(s.accumulator(), expected) <= 1e-12);
    }
  }
  for (double rho : {0.5, 0.1}) {
    PreconditionerSpec spec = make_spec(Rule::EmaRmsprop, InputMode::Hessian, GainSchedule::constant(rho), eps);
    PreconditionerState s(spec, 2);
    for (int t = 1; t <= 60; ++t) {
      s.update(StepInputs{{}, &w});
      for (std::size_t i = 0; i < 2; ++i) {
        const double target = w(i, i) + eps;
        CHECK(s.diagonal_accumulator()[i] - target == doctest::Approx((eps - target) * std::pow(1 - rho, t)));
      }
    }
  }
}

TEST_CASE("random updates against a direct recursion") {
  std::mt19937_64 gen(21);
  const std::size_t d = 4;
  const double eps = 0.2;
  PreconditionerState ada(make_spec(Rule::SaAdagrad, InputMode::Gradient, GainSchedule::sa_shifted(), eps), d);
  PreconditionerState ons(make_spec(Rule::SaOns, InputMode::Hessian, GainSchedule::sa_over_t(0.7), eps, true), d);
  Matrix c = Matrix::identity(d) * eps, b = Matrix::identity(d) * eps;
  for (std::uint64_t t = 1; t <= 200; ++t) {
    const Vector g = random_gradient(d, gen);
    const Matrix h = random_spd(d, gen, 0.0);
    ada.update(StepInputs{g});
    ons.update(StepInputs{g, &h});
    const double r1 = 1.0 / static_cast<double>(t + 1), r2 = 0.7 / static_cast<double>(t);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double e = i == j ? eps : 0.0;
        c(i, j) = (1 - r1) * c(i, j) + r1 * (g[i] * g[j] + e);
        b(i, j) = (1 - r2) * b(i, j) + r2 * (h(i, j) + e);
      }
    CHECK(max_abs_diff(ada.accumulator(), c) <= 1e-12);
    CHECK(max_abs_diff(ons.accumulator(), b) <= 1e-12);
    // P C P = I for the inverse square root; P B = I for the inverse.
    const Matrix p = ada.apply().matrix();
    CHECK(max_abs_diff(p * c * p, Matrix::identity(d)) <= 1e-9);
    CHECK(max_abs_diff(ons.apply().matrix(), lu_inverse(b)) <= 1e-9 * op_norm(lu_inverse(b)));
  }
}

TEST_CASE("allocation-free forms match and invert each other") {
  std::mt19937_64 gen(22);
  const std::size_t d = 5;
  for (Rule r : {Rule::Identity, Rule::SaAdagrad, Rule::SaRmsprop, Rule::SaOns, Rule::EmaRmsprop}) {
    const GainSchedule gain = r == Rule::EmaRmsprop ? GainSchedule::constant(0.3) : GainSchedule::sa_shifted();
    PreconditionerState s(make_spec(r, InputMode::Hessian, gain, 0.5, true), d);
    Matrix p(d, d), q(d, d);
    for (int t = 0; t < 30; ++t) {
      const Matrix h = random_spd(d, gen, 0.0);
      s.update(StepInputs{{}, &h});
      s.apply_into(p);
      s.inverse_apply_into(q);
      CHECK(max_abs_diff(p, s.apply().matrix()) <= 1e-13);
      CHECK(max_abs_diff(q, s.inverse_apply()) <= 1e-13);
      CHECK(max_abs_diff(p * q, Matrix::identity(d)) <= 1e-10);
    }
  }
}

TEST_CASE("accumulator respects its floor and P stays elliptic") {
  std::mt19937_64 gen(23);
  const std::size_t d = 6;
  const double eps = 0.3, g_max = 4.0;
  for (Rule r : {Rule::SaAdagrad, Rule::SaRmsprop}) {
    PreconditionerState s(make_spec(r, InputMode::Gradient, GainSchedule::sa_shifted(), eps), d);
    for (int t = 0; t < 300; ++t) {
      Vector g = random_gradient(d, gen, 3.0);
      const double n = norm2(g);
      if (n > g_max)
        for (double& v : g) v *= g_max / n;
      s.update(StepInputs{g});
      CHECK(loewner_leq(Matrix::identity(d) * eps, s.accumulator(), 1e-12));
      const Matrix p = s.apply().matrix();
      CHECK(loewner_leq(Matrix::identity(d) * (1.0 / std::sqrt(g_max * g_max + eps)), p, 1e-12));
      CHECK(loewner_leq(p, Matrix::identity(d) * (1.0 / std::sqrt(eps)), 1e-12));
    }
  }
}

TEST_CASE("spectrally clipped SA-ONS accumulator stays in band") {
  std::mt19937_64 gen(24);
  const std::size_t d = 4;
  const double h_lo = 0.5, h_hi = 3.0;
  PreconditionerSpec spec = make_spec(Rule::SaOns, InputMode::Hessian, GainSchedule::sa_shifted(), 1.0);
  spec.driver_clip = DriverClip{h_lo, h_hi};
  PreconditionerState s(spec, d);
  for (int t = 0; t < 300; ++t) {
    const Vector a = random_gradient(d, gen, 1.5);
    Matrix h(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) h(i, j) = a[i] * a[j];
    s.update(StepInputs{{}, &h});
    CHECK(loewner_leq(Matrix::identity(d) * h_lo, s.accumulator(), 1e-12));
    CHECK(loewner_leq(s.accumulator(), Matrix::identity(d) * h_hi, 1e-12));
  }
}

TEST_CASE("P_t depends on past drivers only") {
  std::mt19937_64 gen(25);
  const auto spec = make_spec(Rule::SaAdagrad, InputMode::Gradient, GainSchedule::sa_shifted(), 0.5);
  PreconditionerState a(spec, 3), b(spec, 3);
  for (int t = 0; t < 50; ++t) {
    const Vector g = random_gradient(3, gen);
    a.update(StepInputs{g});
    b.update(StepInputs{g});
  }
  const Matrix before = a.apply().matrix();
  CounterRng rng(1);
  for (int i = 0; i < 10; ++i) (void)rng.normal();
  CHECK(a.apply().matrix() == b.apply().matrix());
  CHECK(a.apply().matrix() == before);
  a.update(StepInputs{Vector{9, 9, 9}});
  b.update(StepInputs{Vector{-1, 0, 1}});
  CHECK(a.steps() == 51);
  CHECK(a.apply().matrix() != b.apply().matrix());
}

TEST_CASE("validation") {
  using GS = GainSchedule;
  CHECK_THROWS_AS(PreconditionerState(make_spec(Rule::SaOns, InputMode::Gradient, GS::sa_shifted(), 1.0), 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(PreconditionerState(make_spec(Rule::EmaRmsprop, InputMode::Gradient, GS::sa_shifted(), 1.0), 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(PreconditionerState(make_spec(Rule::SaRmsprop, InputMode::Gradient, GS::constant(0.5), 1.0), 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(PreconditionerState(make_spec(Rule::SaRmsprop, InputMode::Gradient, GS::sa_shifted(), 0.0), 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(PreconditionerState(make_spec(Rule::SaRmsprop, InputMode::Gradient, GS::sa_shifted(), 1.0), 0),
                  std::invalid_argument);
  auto clipped = make_spec(Rule::SaAdagrad, InputMode::Gradient, GS::sa_shifted(), 1.0);
  clipped.driver_clip = DriverClip{2.0, 1.0};
  CHECK_THROWS_AS(PreconditionerState(clipped, 2), std::invalid_argument);

  PreconditionerState s(make_spec(Rule::SaOns, InputMode::Hessian, GS::sa_shifted(), 1.0), 2);
  const Matrix skew = Matrix::from_rows({{1.0, 0.5}, {0.0, 1.0}});
  CHECK_THROWS_AS(s.update(StepInputs{{}, &skew}), std::invalid_argument);
  CHECK_THROWS_AS(s.update(StepInputs{Vector{1, 1}, nullptr}), std::invalid_argument);
  PreconditionerState g(make_spec(Rule::SaRmsprop, InputMode::Gradient, GS::sa_shifted(), 1.0), 2);
  CHECK_THROWS_AS(g.update(StepInputs{Vector{1}}), std::invalid_argument);

  CHECK(parse_rule("sa_ons") == Rule::SaOns);
  CHECK_THROWS_AS(parse_rule("adam"), std::invalid_argument);
  CHECK(make_spec(Rule::EmaRmsprop, InputMode::Hessian, GS::constant(0.999), 1.0).label() == "ema_rmsprop_0.999");
}

TEST_CASE("effective inverse drift limits") {
  std::mt19937_64 gen(26);
  const std::size_t d = 4;
  const SpdMatrix h(random_spd(d, gen));
  const SpdMatrix s(random_spd(d, gen));
  const Matrix h_inv = lu_inverse(h.matrix());
  const double eps = 0.5;

  PreconditionerState id(make_spec(Rule::Identity, InputMode::Hessian, GainSchedule::sa_shifted(), eps), d);
  CHECK(max_abs_diff(effective_inverse_drift(id, h), h_inv) <= 1e-12);

  PreconditionerState ons(make_spec(Rule::SaOns, InputMode::Hessian, GainSchedule::sa_over_t(1.0), eps), d);
  ons.update(StepInputs{{}, &h.matrix()});
  CHECK(max_abs_diff(effective_inverse_drift(ons, h), Matrix::identity(d)) <= 1e-12);

  PreconditionerState ada(make_spec(Rule::SaAdagrad, InputMode::Hessian, GainSchedule::sa_over_t(1.0), eps), d);
  ada.update(StepInputs{{}, &s.matrix()});
  const Matrix m = effective_inverse_drift(ada, h);
  const SpdMatrix shifted(s.matrix() + Matrix::identity(d) * eps);
  const Matrix oracle = h_inv * spectral_map(shifted, SpectralMap::Sqrt).matrix();
  CHECK(max_abs_diff(m, oracle) <= 1e-11);
  CHECK(op_norm(m) == doctest::Approx(operator_factor(Rule::SaAdagrad, h, s, eps)).epsilon(1e-12));
}

TEST_CASE("operator factors") {
  const SpdMatrix h2(Matrix::from_rows({{1.0, 0.0}, {0.0, 0.5}}));
  CHECK(operator_factor(Rule::Identity, h2, h2, 0.1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_WITH_AS(operator_factor(Rule::EmaRmsprop, h2, h2, 0.1), doctest::Contains("no asymptotic factor"),
                       std::invalid_argument);

  std::mt19937_64 gen(27);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + gen() % 10;
    const SpdMatrix h(random_spd(d, gen, 0.05));
    const SpdMatrix s(random_spd(d, gen, 0.05));
    const double ons = operator_factor(Rule::SaOns, h, s, 0.5);
    const double id = operator_factor(Rule::Identity, h, s, 0.5);
    CHECK(ons == 1.0);
    CHECK(id == doctest::Approx(1.0 / h.min_eigenvalue()).epsilon(1e-14));
    CHECK(std::abs(ons / id - h.min_eigenvalue()) <= 1e-12 * h.min_eigenvalue());
    Matrix root(d, d);
    for (std::size_t i = 0; i < d; ++i) root(i, i) = std::sqrt(s(i, i) + 0.5);
    CHECK(operator_factor(Rule::SaRmsprop, h, s, 0.5) ==
          doctest::Approx(psgd::test::power_iteration_norm(lu_inverse(h.matrix()) * root)).epsilon(1e-8));
  }
}

TEST_CASE("probe cadence") {
  StabilizationProbe p(5, 1.5);
  std::vector<std::uint64_t> due;
  for (std::uint64_t t = 1; t <= 40; ++t)
    if (p.due(t)) due.push_back(t);
  CHECK(due == std::vector<std::uint64_t>{2, 3, 4, 5, 6, 8, 12, 17, 26, 38});
  const Matrix a = Matrix::identity(2) * 2.0, b = Matrix::identity(2);
  p.record(3, a, b, 0.5, 1.0);
  REQUIRE(p.rows().size() == 1);
  CHECK(p.rows()[0].increment == doctest::Approx(1.0));
  CHECK(p.rows()[0].norm == doctest::Approx(2.0));
  CHECK(p.rows()[0].coupled_increment == doctest::Approx(3.0));
}

}  // TEST_SUITE
