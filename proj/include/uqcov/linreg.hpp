#pragma once

#include "uqcov/datasets.hpp"
#include "uqcov/intervals.hpp"
#include "uqcov/numerics.hpp"

namespace uqcov {

/// Closed-form OLS fit with everything needed for exact prediction
/// intervals: residual standard error (n-d-1 denominator), (X^T X)^{-1} over
/// the intercept-augmented design, and the 1-D summary statistics.
struct LinearRegressionFit {
  std::vector<double> coefficients;  // intercept first, then one per feature
  double residual_std = 0.0;         // s
  Matrix xtx_inverse;                // (d+1) x (d+1)
  std::size_t n = 0;
  std::size_t d = 0;                 // feature count (without intercept)
  double x_mean = 0.0;               // 1-D case only
  double x_std = 0.0;                // 1-D case only (n-1 denominator)
  double y_std = 0.0;

  double predict(std::span<const double> x) const;
};

/// Requires n > d+1; throws on rank-deficient designs.
LinearRegressionFit fit_linear_regression(const TabularDataset& train);

/// Central 1-alpha prediction interval
///   yhat +/- t_{n-d-1, 1-alpha/2} * s * sqrt(1 + x'(X^T X)^{-1} x)
/// with x intercept-augmented. In one dimension the radicand reduces to
/// 1 + 1/n + (x - xbar)^2 / ((n-1) s_x^2).
PredictionInterval lr_interval(const LinearRegressionFit& fit,
                               std::span<const double> x, double alpha = 0.05);

}  // namespace uqcov
