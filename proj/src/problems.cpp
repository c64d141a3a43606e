#include "psgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "psgd/kernels.hpp"

namespace psgd {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::GeneralSandwich: return "general";
    case Regime::InfoEquality: return "info_equality";
    case Regime::Logistic: return "logistic";
  }
  return "unknown";
}

Regime parse_regime(std::string_view s) {
  if (s == "general" || s == "general_sandwich") return Regime::GeneralSandwich;
  if (s == "info_equality" || s == "info") return Regime::InfoEquality;
  if (s == "logistic") return Regime::Logistic;
  throw std::invalid_argument("unknown regime: " + std::string(s));
}

StreamProblem::StreamProblem(Regime regime, Vector x_star, SpdMatrix hessian, SpdMatrix noise_cov)
    : regime_(regime),
      x_star_(std::move(x_star)),
      hessian_(std::move(hessian)),
      noise_cov_(std::move(noise_cov)),
      hessian_inverse_(spectral_map(hessian_, SpectralMap::Inverse).matrix()) {
  if (hessian_.dim() != x_star_.size() || noise_cov_.dim() != x_star_.size())
    throw std::invalid_argument("StreamProblem: dimension mismatch");
}

double sandwich_gap_ratio(const SpdMatrix& s, const SpdMatrix& h) {
  return frobenius_norm(s.matrix() - h.matrix()) / frobenius_norm(h.matrix());
}

Vector default_x_star(std::size_t dim) {
  Vector x(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    x[j] = sign * (1.0 + static_cast<double>(j) / static_cast<double>(dim));
  }
  return x;
}

namespace {

Vector heteroskedastic_direction(std::size_t dim) {
  return Vector(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
}

class LinearProblem final : public StreamProblem {
 public:
  LinearProblem(Regime regime, Vector x_star, SpdMatrix h, SpdMatrix s, double sigma)
      : StreamProblem(regime, std::move(x_star), h, std::move(s)),
        chol_(cholesky_lower(h)),
        w_(heteroskedastic_direction(h.dim())),
        sigma_(sigma),
        heteroskedastic_(regime == Regime::GeneralSandwich) {}

  void draw(CounterRng& rng, Sample& out) const override {
    const std::size_t d = dim();
    thread_local Vector z;
    z.resize(d);
    for (double& v : z) v = rng.normal();
    out.covariate.resize(d);
    matvec_into(chol_, z, out.covariate);
    const auto& k = kernels::active();
    double scale = sigma_;
    if (heteroskedastic_) scale *= 1.0 + std::abs(k.dot(out.covariate.data(), w_.data(), d));
    out.response = k.dot(out.covariate.data(), x_star().data(), d) + scale * rng.normal();
  }

  void gradient(const Sample& s, std::span<const double> x, std::span<double> g) const override {
    const std::size_t d = dim();
    const auto& k = kernels::active();
    const double r = k.dot(s.covariate.data(), x.data(), d) - s.response;
    for (std::size_t j = 0; j < d; ++j) g[j] = r * s.covariate[j];
  }

  void hessian_estimate(const Sample& s, std::span<const double>, Matrix& out) const override {
    const std::size_t d = dim();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out(i, j) = s.covariate[i] * s.covariate[j];
  }

  void full_gradient(std::span<const double> x, std::span<double> out) const override {
    const std::size_t d = dim();
    thread_local Vector diff;
    diff.resize(d);
    for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - x_star()[j];
    matvec_into(hessian().matrix(), diff, out);
  }

  bool quadratic() const override { return true; }

  std::vector<std::pair<std::string, std::string>> describe() const override {
    std::ostringstream sig;
    sig.precision(17);
    sig << sigma_;
    std::ostringstream ratio;
    ratio.precision(6);
    ratio << sandwich_gap_ratio(noise_cov(), hessian());
    return {{"problem", "linear_regression"},
            {"regime", std::string(to_string(regime()))},
            {"covariates", "N(0, Toeplitz(0.4))"},
            {"noise_law", heteroskedastic_ ? "sigma*(1+|a^T w|)*N(0,1), w=1/sqrt(d)" : "sigma*N(0,1)"},
            {"sigma", sig.str()},
            {"S_minus_H_frobenius_ratio", ratio.str()},
            {"x_star", "(-1)^j (1 + j/d)"}};
  }

 private:
  Matrix chol_;
  Vector w_;
  double sigma_;
  bool heteroskedastic_;
};

}  // namespace

Matrix heteroskedastic_noise_cov(const SpdMatrix& h, double sigma) {
  const std::size_t d = h.dim();
  const Vector w = heteroskedastic_direction(d);
  const Vector k = h.matrix() * w;
  const double s2 = kernels::scalar_table().dot(w.data(), k.data(), d);
  const double s = std::sqrt(s2);
  const double abs1 = std::sqrt(2.0 / std::numbers::pi);  // E|Z|
  const double m0 = 1.0 + 2.0 * abs1 * s + s2;
  const double m2 = s2 + 4.0 * abs1 * s2 * s + 3.0 * s2 * s2;
  Matrix out(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double kk = k[i] * k[j] / s2;
      out(i, j) = sigma * sigma * (m0 * (h(i, j) - kk) + m2 * kk / s2);
    }
  return out;
}

ProblemPtr make_linear_problem(std::size_t dim, const LinearProblemOptions& opts) {
  if (dim == 0 || dim > 64) throw std::invalid_argument("make_linear_problem: dim must be in 1..64");
  if (!(opts.noise_scale > 0.0)) throw std::invalid_argument("make_linear_problem: noise_scale must be positive");
  SpdMatrix h = toeplitz_corr(dim, kToeplitzCorrelation);
  Vector x_star = default_x_star(dim);

  if (opts.regime == Regime::InfoEquality) {
    if (opts.noise_scale != 1.0)
      throw std::invalid_argument("make_linear_problem: info_equality requires unit noise scale (S = H)");
    return std::make_shared<LinearProblem>(Regime::InfoEquality, std::move(x_star), h, h, 1.0);
  }
  if (opts.regime != Regime::GeneralSandwich)
    throw std::invalid_argument("make_linear_problem: regime must be general or info_equality");

  const Matrix k_unit = heteroskedastic_noise_cov(h, 1.0);
  const double h_norm = frobenius_norm(h.matrix());
  auto ratio_at = [&](double var) { return frobenius_norm(k_unit * var - h.matrix()) / h_norm; };

  double variance = opts.noise_scale * opts.noise_scale;
  if (opts.auto_tune) {
    if (!(opts.target_ratio >= kGapRatioLow && opts.target_ratio <= kGapRatioHigh))
      throw std::invalid_argument("make_linear_problem: target_ratio outside [1.1, 2.0]");
    // ratio(var) is convex in var; bisect on the increasing branch.
    double lo = std::max(0.0, [&] {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < dim * dim; ++i) {
        num += k_unit.data()[i] * h.matrix().data()[i];
        den += k_unit.data()[i] * k_unit.data()[i];
      }
      return num / den;
    }());
    double hi = std::max(1.0, 2.0 * lo);
    while (ratio_at(hi) < opts.target_ratio) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (ratio_at(mid) < opts.target_ratio ? lo : hi) = mid;
    }
    variance = 0.5 * (lo + hi);
  }
  const double ratio = ratio_at(variance);
  if (!(ratio >= kGapRatioLow && ratio <= kGapRatioHigh))
    throw std::invalid_argument("make_linear_problem: ||S-H||_F/||H||_F outside [1.1, 2.0]; adjust noise_scale");
  const double sigma = std::sqrt(variance);
  SpdMatrix s(heteroskedastic_noise_cov(h, sigma));
  return std::make_shared<LinearProblem>(Regime::GeneralSandwich, std::move(x_star), h, std::move(s), sigma);
}

// ---------------------------------------------------------------------------

namespace {

inline double softplus(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }
inline double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

struct LogisticData {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> row_major;  // rows x dim
  std::vector<double> col_major;  // dim x rows
  std::vector<double> labels;
  double ridge = 0.0;

  double objective(std::span<const double> x) const {
    double f = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double m = kernels::scalar_table().dot(&row_major[i * dim], x.data(), dim);
      f += softplus(m) - labels[i] * m;
    }
    double xx = 0.0;
    for (double v : x) xx += v * v;
    return f / static_cast<double>(rows) + 0.5 * ridge * xx;
  }

  // grad F(x) via column sweeps: margins = X x, r = sigma(margins) - y, g = X^T r / N + ridge x.
  void gradient(std::span<const double> x, std::span<double> out, std::vector<double>& margin,
                std::vector<double>& resid) const {
    const auto& k = kernels::active();
    margin.assign(rows, 0.0);
    resid.resize(rows);
    for (std::size_t j = 0; j < dim; ++j) k.axpy(x[j], &col_major[j * rows], margin.data(), rows);
    k.logistic_residuals(margin.data(), labels.data(), resid.data(), rows);
    const double inv_n = 1.0 / static_cast<double>(rows);
    for (std::size_t j = 0; j < dim; ++j)
      out[j] = inv_n * k.dot(&col_major[j * rows], resid.data(), rows) + ridge * x[j];
  }

  Matrix hessian(std::span<const double> x) const {
    Matrix h(dim, dim);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* a = &row_major[i * dim];
      const double p = sigmoid(kernels::scalar_table().dot(a, x.data(), dim));
      const double w = p * (1.0 - p);
      for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c) h(r, c) += w * a[r] * a[c];
    }
    h *= 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < dim; ++r) h(r, r) += ridge;
    return h;
  }
};

Vector cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t d = l.rows();
  Vector y(d), x(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t i = d; i-- > 0;) {
    double s = y[i];
    for (std::size_t k = i + 1; k < d; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

Vector newton_minimize(const LogisticData& data) {
  Vector x(data.dim, 0.0);
  Vector g(data.dim);
  std::vector<double> margin, resid;
  for (int it = 0; it < 200; ++it) {
    data.gradient(x, g, margin, resid);
    if (norm2(g) <= 1e-10) return x;
    const Matrix l = cholesky_lower(SpdMatrix(data.hessian(x)));
    const Vector step = cholesky_solve(l, g);
    double slope = 0.0;
    for (std::size_t j = 0; j < data.dim; ++j) slope += g[j] * step[j];
    const double f0 = data.objective(x);
    double t = 1.0;
    Vector trial(data.dim);
    // Near the optimum objective differences drop below rounding; take the full step.
    const int searches = norm2(g) < 1e-6 ? 1 : 60;
    for (int ls = 0; ls < searches; ++ls) {
      for (std::size_t j = 0; j < data.dim; ++j) trial[j] = x[j] - t * step[j];
      if (data.objective(trial) <= f0 - 1e-4 * t * slope) break;
      t *= 0.5;
    }
    x = trial;
  }
  data.gradient(x, g, margin, resid);
  if (norm2(g) <= 1e-10) return x;
  throw NumericalError("make_logistic_problem: Newton did not converge in 200 iterations");
}

class LogisticProblem final : public StreamProblem {
 public:
  LogisticProblem(std::shared_ptr<const LogisticData> data, Vector x_star, SpdMatrix h, SpdMatrix s,
                  std::vector<std::string> names)
      : StreamProblem(Regime::Logistic, std::move(x_star), std::move(h), std::move(s)),
        data_(std::move(data)),
        names_(std::move(names)) {}

  void draw(CounterRng& rng, Sample& out) const override {
    const std::size_t i = rng.uniform_index(data_->rows);
    const double* a = &data_->row_major[i * data_->dim];
    out.covariate.assign(a, a + data_->dim);
    out.response = data_->labels[i];
  }

  void gradient(const Sample& s, std::span<const double> x, std::span<double> g) const override {
    const std::size_t d = dim();
    const double r = sigmoid(kernels::active().dot(s.covariate.data(), x.data(), d)) - s.response;
    for (std::size_t j = 0; j < d; ++j) g[j] = r * s.covariate[j] + data_->ridge * x[j];
  }

  void hessian_estimate(const Sample& s, std::span<const double> x, Matrix& out) const override {
    const std::size_t d = dim();
    const double p = sigmoid(kernels::active().dot(s.covariate.data(), x.data(), d));
    const double w = p * (1.0 - p);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out(i, j) = w * s.covariate[i] * s.covariate[j];
    for (std::size_t i = 0; i < d; ++i) out(i, i) += data_->ridge;
  }

  void full_gradient(std::span<const double> x, std::span<double> out) const override {
    thread_local std::vector<double> margin, resid;
    data_->gradient(x, out, margin, resid);
  }

  bool quadratic() const override { return false; }

  std::vector<std::pair<std::string, std::string>> describe() const override {
    std::ostringstream info;
    info.precision(6);
    info << hessian().condition_number();
    std::string feats;
    for (const auto& n : names_) feats += (feats.empty() ? "" : ";") + n;
    return {{"problem", "logistic_regression"},
            {"rows", std::to_string(data_->rows)},
            {"ridge", std::to_string(data_->ridge)},
            {"features", feats},
            {"preprocessing", "standardized (population variance) + intercept"},
            {"hessian_condition_number", info.str()}};
  }

 private:
  std::shared_ptr<const LogisticData> data_;
  std::vector<std::string> names_;
};

}  // namespace

ProblemPtr make_logistic_problem(const DatasetTable& table, double ridge) {
  if (table.rows() == 0 || table.dim() == 0) throw std::invalid_argument("make_logistic_problem: empty dataset");
  if (!(ridge >= 0.0)) throw std::invalid_argument("make_logistic_problem: ridge must be nonnegative");
  auto data = std::make_shared<LogisticData>();
  data->rows = table.rows();
  data->dim = table.dim();
  data->ridge = ridge;
  data->row_major.resize(data->rows * data->dim);
  data->col_major.resize(data->rows * data->dim);
  for (std::size_t i = 0; i < data->rows; ++i) {
    if (table.features[i].size() != data->dim)
      throw std::invalid_argument("make_logistic_problem: ragged feature rows");
    const double y = table.labels[i];
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("make_logistic_problem: labels must be binary");
    for (std::size_t j = 0; j < data->dim; ++j) {
      data->row_major[i * data->dim + j] = table.features[i][j];
      data->col_major[j * data->rows + i] = table.features[i][j];
    }
  }
  data->labels = table.labels;

  Vector x_star = newton_minimize(*data);
  SpdMatrix h(data->hessian(x_star));

  const std::size_t d = data->dim;
  Vector mean(d, 0.0);
  std::vector<Vector> grads(data->rows, Vector(d));
  for (std::size_t i = 0; i < data->rows; ++i) {
    const double* a = &data->row_major[i * d];
    const double r = sigmoid(kernels::scalar_table().dot(a, x_star.data(), d)) - data->labels[i];
    for (std::size_t j = 0; j < d; ++j) {
      grads[i][j] = r * a[j] + ridge * x_star[j];
      mean[j] += grads[i][j];
    }
  }
  for (double& m : mean) m /= static_cast<double>(data->rows);
  Matrix s(d, d);
  for (const Vector& g : grads)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) s(r, c) += (g[r] - mean[r]) * (g[c] - mean[c]);
  s *= 1.0 / static_cast<double>(data->rows);

  return std::make_shared<LogisticProblem>(std::move(data), std::move(x_star), std::move(h), SpdMatrix(s),
                                           table.feature_names);
}

}  // namespace psgd
