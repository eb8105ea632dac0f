#pragma once

#include <vector>

#include "uqcov/numerics.hpp"

namespace uqcov {

/// Predictive mean plus the two variance components of one regression
/// prediction. Total predictive variance = epistemic + aleatoric.
struct GaussianPrediction {
  double mean = 0.0;
  double epistemic_variance = 0.0;
  double aleatoric_variance = 0.0;

  double total_variance() const { return epistemic_variance + aleatoric_variance; }
};

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.05;

  double width() const { return upper - lower; }
  bool covers(double y) const { return lower <= y && y <= upper; }
};

/// Minimum-cardinality class set accumulating at least 1-alpha probability.
struct PredictionSet {
  std::vector<int> classes;     // ascending class indices
  double alpha = 0.05;
  double accumulated_mass = 0.0;

  std::size_t size() const { return classes.size(); }
  bool contains(int label) const;
};

/// Empirical-quantile interval: [quantile(alpha/2), quantile(1-alpha/2)].
PredictionInterval interval_from_samples(const SampleVector& samples, double alpha = 0.05);

/// Central normal interval mean +/- z_{1-alpha/2} * sqrt(total variance).
PredictionInterval interval_from_gaussian(const GaussianPrediction& pred, double alpha = 0.05);

/// Greedy top-probability set: sort descending (ties by lower class index),
/// include until accumulated mass >= 1-alpha. Probabilities must sum to 1
/// within 1e-4 and are renormalized inside that tolerance.
PredictionSet prediction_set(std::span<const double> probs, double alpha = 0.05);

}  // namespace uqcov
