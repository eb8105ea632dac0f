#include "uqcov/linreg.hpp"

#include <cmath>

namespace uqcov {

double LinearRegressionFit::predict(std::span<const double> x) const {
  if (x.size() != d) throw std::invalid_argument("LinearRegressionFit: dimension mismatch");
  double acc = coefficients[0];
  for (std::size_t j = 0; j < d; ++j) acc += coefficients[j + 1] * x[j];
  return acc;
}

LinearRegressionFit fit_linear_regression(const TabularDataset& train) {
  const std::size_t n = train.size(), d = train.dim();
  if (n <= d + 1) throw std::invalid_argument("fit_linear_regression: need n > d+1");

  Matrix design(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < d; ++j) design(i, j + 1) = train.features(i, j);
  }

  LinearRegressionFit fit;
  fit.n = n;
  fit.d = d;
  fit.coefficients = ols_fit(design, train.labels);

  // (X^T X)^{-1} via the Cholesky factor, one unit vector at a time.
  const std::size_t p = d + 1;
  Matrix xtx(p, p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a; b < p; ++b) xtx(a, b) += design(i, a) * design(i, b);
    }
  }
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < a; ++b) xtx(a, b) = xtx(b, a);
  }
  Matrix chol;
  try {
    chol = cholesky(xtx);
  } catch (const CholeskyError&) {
    throw std::runtime_error("fit_linear_regression: rank-deficient design");
  }
  fit.xtx_inverse = Matrix(p, p, 0.0);
  std::vector<double> e(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    e[j] = 1.0;
    const auto col = cholesky_solve(chol, e);
    for (std::size_t i = 0; i < p; ++i) fit.xtx_inverse(i, j) = col[i];
    e[j] = 0.0;
  }

  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = fit.predict(train.features.row(i)) - train.labels[i];
    rss += r * r;
  }
  fit.residual_std = std::sqrt(std::max(0.0, rss) / static_cast<double>(n - d - 1));

  if (d == 1) {
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = train.features(i, 0);
    fit.x_mean = mean(xs);
    fit.x_std = sample_stddev(xs);
  }
  fit.y_std = sample_stddev(train.labels);
  return fit;
}

PredictionInterval lr_interval(const LinearRegressionFit& fit,
                               std::span<const double> x, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("lr_interval: alpha outside (0,1)");
  }
  const std::size_t p = fit.d + 1;
  std::vector<double> xa(p);
  xa[0] = 1.0;
  for (std::size_t j = 0; j < fit.d; ++j) xa[j + 1] = x[j];

  double quad = 0.0;
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) quad += xa[a] * fit.xtx_inverse(a, b) * xa[b];
  }
  const auto df = static_cast<unsigned>(fit.n - fit.d - 1);
  const double t = t_quantile(1.0 - alpha / 2.0, df);
  const double half = t * fit.residual_std * std::sqrt(1.0 + std::max(0.0, quad));
  const double yhat = fit.predict(x);
  return {yhat - half, yhat + half, alpha};
}

}  // namespace uqcov
