#include "uqcov/intervals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uqcov {

bool PredictionSet::contains(int label) const {
  return std::binary_search(classes.begin(), classes.end(), label);
}

PredictionInterval interval_from_samples(const SampleVector& samples, double alpha) {
  if (samples.empty()) throw std::invalid_argument("interval_from_samples: empty samples");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("interval_from_samples: alpha outside (0,1)");
  }
  std::vector<double> sorted(samples);
  std::sort(sorted.begin(), sorted.end());
  PredictionInterval iv;
  iv.alpha = alpha;
  iv.lower = quantile_sorted(sorted, alpha / 2.0);
  iv.upper = quantile_sorted(sorted, 1.0 - alpha / 2.0);
  return iv;
}

PredictionInterval interval_from_gaussian(const GaussianPrediction& pred, double alpha) {
  if (pred.epistemic_variance < 0.0 || pred.aleatoric_variance < 0.0 ||
      !std::isfinite(pred.total_variance())) {
    throw std::invalid_argument("interval_from_gaussian: invalid variance");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("interval_from_gaussian: alpha outside (0,1)");
  }
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std::sqrt(pred.total_variance());
  return {pred.mean - half, pred.mean + half, alpha};
}

PredictionSet prediction_set(std::span<const double> probs, double alpha) {
  const std::size_t k = probs.size();
  if (k < 2) throw std::invalid_argument("prediction_set: need at least 2 classes");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("prediction_set: alpha outside (0,1)");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0 || !std::isfinite(p)) {
      throw std::invalid_argument("prediction_set: negative or non-finite probability");
    }
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-4) {
    throw std::invalid_argument("prediction_set: probabilities sum to " +
                                std::to_string(sum) + ", outside tolerance");
  }

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;  // cutoff ties broken by lower class index
  });

  const double target = 1.0 - alpha;
  PredictionSet set;
  set.alpha = alpha;
  double acc = 0.0;
  for (int idx : order) {
    set.classes.push_back(idx);
    acc += probs[idx] / sum;
    // 1e-12 slack guards exact-boundary float dust (e.g. .5+.3+.15 vs .95).
    if (acc >= target - 1e-12) break;
  }
  set.accumulated_mass = acc;
  std::sort(set.classes.begin(), set.classes.end());
  return set;
}

}  // namespace uqcov
