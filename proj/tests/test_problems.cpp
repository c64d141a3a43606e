#include <doctest.h>

#include <cmath>
#include <random>

#include "psgd/problems.hpp"
#include "support.hpp"

using namespace psgd;
using psgd::test::max_abs_diff;

namespace {

// Sample mean and covariance of per-sample gradients at x.
struct GradientMoments {
  Vector mean;
  Vector mean_se;
  Matrix cov;
};

GradientMoments gradient_moments(const StreamProblem& p, std::span<const double> x, std::uint64_t draws,
                                 std::uint64_t seed) {
  const std::size_t d = p.dim();
  CounterRng rng(seed);
  Sample s;
  Vector g(d), sum(d, 0.0), sumsq(d, 0.0);
  Matrix outer(d, d);
  for (std::uint64_t i = 0; i < draws; ++i) {
    p.draw(rng, s);
    p.gradient(s, x, g);
    for (std::size_t a = 0; a < d; ++a) {
      sum[a] += g[a];
      sumsq[a] += g[a] * g[a];
      for (std::size_t b = 0; b < d; ++b) outer(a, b) += g[a] * g[b];
    }
  }
  const double n = static_cast<double>(draws);
  GradientMoments m{Vector(d), Vector(d), Matrix(d, d)};
  for (std::size_t a = 0; a < d; ++a) {
    m.mean[a] = sum[a] / n;
    m.mean_se[a] = std::sqrt((sumsq[a] / n - m.mean[a] * m.mean[a]) / n);
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) m.cov(a, b) = outer(a, b) / n - m.mean[a] * m.mean[b];
  return m;
}

DatasetTable breast_cancer() { return ingest_csv(psgd::test::source_path("data/breast_cancer_wdbc_mean.csv")); }

}  // namespace

TEST_SUITE("problems") {

TEST_CASE("information-equality problem has S = H") {
  for (std::size_t d : {1u, 2u, 5u, 20u}) {
    LinearProblemOptions o;
    o.regime = Regime::InfoEquality;
    const auto p = make_linear_problem(d, o);
    CHECK(frobenius_norm(p->noise_cov().matrix() - p->hessian().matrix()) <=
          1e-8 * frobenius_norm(p->hessian().matrix()));
    CHECK(p->x_star() == default_x_star(d));
    CHECK(p->quadratic());
  }
  const auto p2 = make_linear_problem(2, {});
  CHECK(max_abs_diff(p2->hessian().matrix(), Matrix::from_rows({{1, 0.4}, {0.4, 1}})) <= 1e-15);
}

TEST_CASE("ground-truth vector") {
  const Vector x = default_x_star(4);
  CHECK(x[0] == 1.0);
  CHECK(x[1] == -1.25);
  CHECK(x[2] == 1.5);
  CHECK(x[3] == -1.75);
}

TEST_CASE("general sandwich gap lands in band") {
  for (std::size_t d : {2u, 5u, 20u, 50u}) {
    LinearProblemOptions o;
    o.regime = Regime::GeneralSandwich;
    const auto p = make_linear_problem(d, o);
    const double ratio = sandwich_gap_ratio(p->noise_cov(), p->hessian());
    CHECK(ratio >= kGapRatioLow);
    CHECK(ratio <= kGapRatioHigh);
    CHECK(ratio == doctest::Approx(1.5).epsilon(1e-6));
  }
  LinearProblemOptions bad;
  bad.regime = Regime::GeneralSandwich;
  bad.auto_tune = false;
  bad.noise_scale = 1e-3;
  CHECK_THROWS_AS(make_linear_problem(5, bad), std::invalid_argument);
  CHECK_THROWS_AS(make_linear_problem(0, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_linear_problem(65, {}), std::invalid_argument);
}

TEST_CASE("Monte Carlo gradient covariance matches the closed-form S") {
  LinearProblemOptions o;
  o.regime = Regime::GeneralSandwich;
  const auto p = make_linear_problem(5, o);
  const auto m = gradient_moments(*p, p->x_star(), 1000000, 99);
  const double rel = frobenius_norm(m.cov - p->noise_cov().matrix()) / frobenius_norm(p->noise_cov().matrix());
  CHECK(rel <= 0.02);
  for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(m.mean[j]) <= 4 * m.mean_se[j]);

  const auto q = make_linear_problem(5, {});
  const auto mq = gradient_moments(*q, q->x_star(), 1000000, 100);
  CHECK(frobenius_norm(mq.cov - q->hessian().matrix()) / frobenius_norm(q->hessian().matrix()) <= 0.02);
}

TEST_CASE("gradients at x* average to zero") {
  for (Regime r : {Regime::InfoEquality, Regime::GeneralSandwich}) {
    LinearProblemOptions o;
    o.regime = r;
    const auto p = make_linear_problem(5, o);
    const auto m = gradient_moments(*p, p->x_star(), 100000, 3);
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(m.mean[j]) <= 4 * m.mean_se[j]);
  }
}

TEST_CASE("Hessian estimates average to H") {
  const auto p = make_linear_problem(5, {});
  CounterRng rng(4);
  Sample s;
  Matrix sum(5, 5), est(5, 5);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    p->draw(rng, s);
    p->hessian_estimate(s, p->x_star(), est);
    CHECK_UNARY(max_abs_asymmetry(est) == 0.0);
    sum += est;
  }
  sum *= 1.0 / n;
  CHECK(frobenius_norm(sum - p->hessian().matrix()) / frobenius_norm(p->hessian().matrix()) <= 0.02);
}

TEST_CASE("noise is mean zero away from x*") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd;
  LinearProblemOptions o;
  o.regime = Regime::GeneralSandwich;
  const auto p = make_linear_problem(3, o);
  for (int k = 0; k < 10; ++k) {
    Vector x(3);
    for (double& v : x) v = nd(gen);
    const auto m = gradient_moments(*p, x, 40000, 1000 + k);
    Vector grad(3);
    p->full_gradient(x, grad);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(m.mean[j] - grad[j]) <= 4.5 * m.mean_se[j]);
  }
}

TEST_CASE("linear objective is exactly quadratic") {
  std::mt19937_64 gen(18);
  std::normal_distribution<double> nd;
  const auto p = make_linear_problem(7, {});
  for (int k = 0; k < 20; ++k) {
    Vector x(7), g(7), diff(7);
    for (double& v : x) v = 10 * nd(gen);
    p->full_gradient(x, g);
    for (std::size_t j = 0; j < 7; ++j) diff[j] = x[j] - p->x_star()[j];
    const Vector hd = p->hessian().matrix() * diff;
    CHECK(max_abs_diff(g, hd) <= 1e-12 * std::max(1.0, norm2(hd)));
  }
}

TEST_CASE("one-dimensional heteroskedastic covariance") {
  // For d = 1 the closed form is sigma^2 E[a^2 (1+|a|)^2] with a ~ N(0, h).
  const SpdMatrix h(Matrix::from_rows({{2.0}}));
  const Matrix s = heteroskedastic_noise_cov(h, 0.5);
  const double sd = std::sqrt(2.0), abs1 = std::sqrt(2.0 / 3.14159265358979323846);
  const double expected = 0.25 * (2.0 + 2.0 * 2.0 * abs1 * sd * 2.0 + 3.0 * 4.0);
  CHECK(s(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("csv ingestion standardizes and prepends an intercept") {
  const auto t = parse_csv("a,b,diagnosis\n1,10,M\n2,10.5,B\n6,14,malignant\n");
  REQUIRE(t.rows() == 3);
  REQUIRE(t.dim() == 3);
  CHECK(t.feature_names[0] == "intercept");
  CHECK(t.labels == std::vector<double>{1, 0, 1});
  for (std::size_t j = 1; j < 3; ++j) {
    double m = 0, v = 0;
    for (const auto& row : t.features) m += row[j];
    m /= 3;
    for (const auto& row : t.features) v += (row[j] - m) * (row[j] - m);
    v /= 3;
    CHECK(std::abs(m) <= 1e-12);
    CHECK(std::abs(v - 1.0) <= 1e-12);
  }
  for (const auto& row : t.features) CHECK(row[0] == 1.0);

  IngestSchema raw;
  raw.standardize = false;
  raw.add_intercept = false;
  raw.feature_columns = {"b"};
  const auto r = parse_csv("a,b,diagnosis\n1,10,0\n2,11,1\n", raw);
  CHECK(r.dim() == 1);
  CHECK(r.features[1][0] == 11.0);
}

TEST_CASE("csv ingestion errors") {
  CHECK_THROWS_WITH_AS(parse_csv(""), doctest::Contains("empty"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_csv("a,diagnosis\n1,M\n1,B\n"), doctest::Contains("zero variance"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_csv("a,diagnosis\n1,M\nx,B\n"), doctest::Contains("line 3"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_csv("a,diagnosis\n1,M\n2\n"), doctest::Contains("line 3"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_csv("a,diagnosis\n1,M\n2,maybe\n"), doctest::Contains("non-binary"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_csv("a,label\n1,0\n2,1\n"), doctest::Contains("missing column"), std::invalid_argument);
  CHECK_THROWS_AS(ingest_csv("/nonexistent/file.csv"), std::invalid_argument);
}

TEST_CASE("intercept-only balanced data has x* = 0") {
  DatasetTable t;
  t.feature_names = {"intercept"};
  for (int i = 0; i < 10; ++i) {
    t.features.push_back({1.0});
    t.labels.push_back(i % 2);
  }
  const auto p = make_logistic_problem(t, 0.0);
  CHECK(std::abs(p->x_star()[0]) <= 1e-12);
  CHECK(p->hessian()(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("breast cancer logistic problem") {
  const auto t = breast_cancer();
  CHECK(t.rows() == 569);
  REQUIRE(t.dim() == 11);
  const auto p = make_logistic_problem(t, 0.1);
  CHECK(p->dim() == 11);
  CHECK_FALSE(p->quadratic());
  CHECK(p->regime() == Regime::Logistic);

  Vector g(11);
  p->full_gradient(p->x_star(), g);
  CHECK(norm2(g) <= 1e-10);

  // Population quantities against per-row averages.
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 0.5);
  Vector x = p->x_star();
  for (double& v : x) v += nd(gen);
  Vector avg(11, 0.0), gi(11), full(11);
  Matrix havg(11, 11), hi(11, 11);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const Sample s{t.features[i], t.labels[i]};
    p->gradient(s, x, gi);
    for (std::size_t j = 0; j < 11; ++j) avg[j] += gi[j] / static_cast<double>(t.rows());
    p->hessian_estimate(s, p->x_star(), hi);
    havg += hi * (1.0 / static_cast<double>(t.rows()));
  }
  p->full_gradient(x, full);
  CHECK(max_abs_diff(avg, full) <= 1e-12);
  CHECK(max_abs_diff(havg, p->hessian().matrix()) <= 1e-12);

  // Sampling draws rows uniformly, so the stochastic gradient is unbiased.
  const auto m = gradient_moments(*p, x, 200000, 8);
  for (std::size_t j = 0; j < 11; ++j) CHECK(std::abs(m.mean[j] - full[j]) <= 4.5 * m.mean_se[j]);
  const auto m0 = gradient_moments(*p, p->x_star(), 400000, 9);
  CHECK(frobenius_norm(m0.cov - p->noise_cov().matrix()) / frobenius_norm(p->noise_cov().matrix()) <= 0.03);
}

TEST_CASE("logistic Hessian estimates are pathwise bounded") {
  const auto t = breast_cancer();
  const double ridge = 0.1;
  const auto p = make_logistic_problem(t, ridge);
  CounterRng rng(77);
  Sample s;
  Matrix h(11, 11);
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 300; ++k) {
    p->draw(rng, s);
    Vector x(11);
    for (double& v : x) v = nd(gen);
    p->hessian_estimate(s, x, h);
    const Matrix ridge_i = Matrix::identity(11) * ridge;
    double a2 = 0.0;
    for (double v : s.covariate) a2 += v * v;
    CHECK(loewner_leq(ridge_i, h, 1e-12));
    CHECK(loewner_leq(h, Matrix::identity(11) * (0.25 * a2 + ridge), 1e-12));
  }
}

TEST_CASE("dimension checks and metadata") {
  const auto p = make_linear_problem(3, {});
  bool named = false;
  for (const auto& [k, v] : p->describe())
    if (k == "problem") named = v == "linear_regression";
  CHECK(named);
  CHECK(parse_regime("general_sandwich") == Regime::GeneralSandwich);
  CHECK(to_string(Regime::InfoEquality) == "info_equality");
  CHECK_THROWS_AS(parse_regime("other"), std::invalid_argument);
}

}  // TEST_SUITE
