#pragma once

// Streaming problems: each exposes i.i.d. samples, stochastic gradients and
// Hessian estimates at arbitrary iterates, the exact population gradient, and
// the ground-truth moments (x*, H, S) used by the diagnostics.

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "psgd/linalg.hpp"
#include "psgd/rng.hpp"

namespace psgd {

enum class Regime { GeneralSandwich, InfoEquality, Logistic };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view s);

struct Sample {
  Vector covariate;
  double response = 0.0;
};

class StreamProblem {
 public:
  virtual ~StreamProblem() = default;

  std::size_t dim() const { return x_star_.size(); }
  Regime regime() const { return regime_; }
  const Vector& x_star() const { return x_star_; }
  const SpdMatrix& hessian() const { return hessian_; }
  const SpdMatrix& noise_cov() const { return noise_cov_; }
  const Matrix& hessian_inverse() const { return hessian_inverse_; }

  /// Fresh i.i.d. draw; mutates only the caller's generator.
  virtual void draw(CounterRng& rng, Sample& out) const = 0;

  /// Stochastic gradient of the per-sample loss at x.
  virtual void gradient(const Sample& s, std::span<const double> x, std::span<double> g) const = 0;

  /// Symmetric stochastic Hessian estimate at x.
  virtual void hessian_estimate(const Sample& s, std::span<const double> x, Matrix& out) const = 0;

  /// Population gradient grad F(x).
  virtual void full_gradient(std::span<const double> x, std::span<double> out) const = 0;

  /// True when F is exactly quadratic, so grad F(x) = H (x - x*).
  virtual bool quadratic() const = 0;

  /// Human-readable construction details recorded in run metadata.
  virtual std::vector<std::pair<std::string, std::string>> describe() const = 0;

  Sample draw_sample(CounterRng& rng) const {
    Sample s;
    draw(rng, s);
    return s;
  }
  Vector gradient_at(const Sample& s, std::span<const double> x) const {
    Vector g(dim());
    gradient(s, x, g);
    return g;
  }
  Matrix hessian_estimate_at(const Sample& s, std::span<const double> x) const {
    Matrix h(dim(), dim());
    hessian_estimate(s, x, h);
    return h;
  }

 protected:
  StreamProblem(Regime regime, Vector x_star, SpdMatrix hessian, SpdMatrix noise_cov);

 private:
  Regime regime_;
  Vector x_star_;
  SpdMatrix hessian_;
  SpdMatrix noise_cov_;
  Matrix hessian_inverse_;
};

using ProblemPtr = std::shared_ptr<const StreamProblem>;

/// Frobenius ratio ||S - H||_F / ||H||_F.
double sandwich_gap_ratio(const SpdMatrix& s, const SpdMatrix& h);

// ---------------------------------------------------------------------------
// Synthetic linear regression: a ~ N(0, H) with Toeplitz H_jk = 0.4^|j-k|,
// y = a^T x* + noise, loss (a^T x - y)^2 / 2.
//
// info_equality:    noise ~ N(0, 1), so S = H.
// general_sandwich: noise = sigma (1 + |a^T w|) N(0, 1), w = 1/sqrt(d). The
//                   gradient covariance at x* then has the closed form
//                     S = sigma^2 [ m0 (H - k k^T / s2) + m2 k k^T / s2^2 ],
//                   k = H w, s2 = w^T H w, m0 = E(1+|z|)^2, m2 = E z^2 (1+|z|)^2
//                   for z ~ N(0, s2). sigma is tuned by bisection so that the
//                   Frobenius gap ratio lands on `target_ratio`.
// ---------------------------------------------------------------------------

inline constexpr double kToeplitzCorrelation = 0.4;
inline constexpr double kGapRatioLow = 1.1;
inline constexpr double kGapRatioHigh = 2.0;

struct LinearProblemOptions {
  Regime regime = Regime::InfoEquality;
  double noise_scale = 1.0;
  bool auto_tune = true;
  double target_ratio = 1.5;
};

/// Deterministic ground truth x*_j = (-1)^j (1 + j/d), j = 0..d-1.
Vector default_x_star(std::size_t dim);

ProblemPtr make_linear_problem(std::size_t dim, const LinearProblemOptions& opts = {});

/// Closed-form S for the heteroskedastic mechanism at the given sigma.
Matrix heteroskedastic_noise_cov(const SpdMatrix& h, double sigma);

// ---------------------------------------------------------------------------
// Logistic regression over an ingested table.
// ---------------------------------------------------------------------------

struct DatasetTable {
  std::vector<std::string> feature_names;  // includes "intercept" first when added
  std::vector<Vector> features;
  std::vector<double> labels;  // in {0, 1}

  std::size_t rows() const { return features.size(); }
  std::size_t dim() const { return feature_names.size(); }
};

struct IngestSchema {
  std::string label_column = "diagnosis";
  std::vector<std::string> feature_columns;  // empty: every non-label column
  bool add_intercept = true;
  bool standardize = true;
};

/// Parses a comma-separated file with a header row. Features are standardized
/// to zero mean and unit (population) variance over the whole file, then an
/// intercept column of ones is prepended. Labels accept 0/1, M/B and
/// malignant/benign (case-insensitive; malignant = 1).
DatasetTable ingest_csv(const std::filesystem::path& path, const IngestSchema& schema = {});
DatasetTable parse_csv(std::string_view text, const IngestSchema& schema = {});

/// F(x) = mean_i [log(1 + e^{a_i^T x}) - y_i a_i^T x] + ridge/2 ||x||^2.
/// x* by damped Newton to ||grad F|| <= 1e-10 (at most 200 iterations); H and S
/// are the full-dataset Hessian and per-row gradient covariance at x*.
ProblemPtr make_logistic_problem(const DatasetTable& data, double ridge);

}  // namespace psgd
