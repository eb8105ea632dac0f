#pragma once

#include <cstdint>

#include "uqcov/datasets.hpp"
#include "uqcov/intervals.hpp"
#include "uqcov/numerics.hpp"

namespace uqcov {

struct GpConfig {
  bool optimize = true;          // marginal-likelihood ascent on log params
  // Zero means "derive from the data": amplitude = std(labels), lengthscale =
  // median pairwise distance, noise = 0.05 * var(labels). Explicit positive
  // values are used as-is (and as the starting point when optimizing).
  double amplitude = 0.0;
  double lengthscale = 0.0;
  double noise_variance = 0.0;
  int max_train = 2000;          // subsample above (seeded)
  int optimize_subsample = 512;  // hyperparameter opt cap
  int optimize_iters = 80;
  double optimize_lr = 0.05;
  std::uint64_t seed = 0;
};

/// Exact GP regression with the squared exponential kernel
/// k(x,x') = a^2 exp(-||x-x'||^2 / (2 l^2)). Labels are centered by the
/// training mean; variances are reported in original units. The predictive
/// interval variance is epistemic + aleatoric (observation noise).
class GpRegressor {
 public:
  GaussianPrediction predict(std::span<const double> x) const;

  double amplitude() const { return amplitude_; }
  double lengthscale() const { return lengthscale_; }
  double noise_variance() const { return noise_variance_; }
  double log_marginal_likelihood() const { return log_marginal_; }
  std::size_t train_size() const { return inputs_.rows; }

 private:
  friend GpRegressor train_gp(const TabularDataset&, const GpConfig&);
  Matrix inputs_;                 // training inputs actually used
  std::vector<double> alpha_;     // (K + s^2 I)^{-1} (y - ybar)
  Matrix chol_;                   // L with L L^T = K + s^2 I (after jitter)
  double label_mean_ = 0.0;
  double amplitude_ = 1.0;
  double lengthscale_ = 1.0;
  double noise_variance_ = 0.01;
  double log_marginal_ = 0.0;
};

/// Fits hyperparameters by marginal-likelihood ascent (Adam on logs) when
/// config.optimize is set, else uses the fixed/heuristic values. Cholesky
/// failures retry with jitter 1e-10 * mean diagonal, scaled x10 up to 1e-4;
/// past that the CholeskyError propagates.
GpRegressor train_gp(const TabularDataset& train, const GpConfig& config = {});

}  // namespace uqcov
