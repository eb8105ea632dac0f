#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqcov/datasets.hpp"
#include "uqcov/intervals.hpp"
#include "uqcov/nn.hpp"

namespace uqcov {

/// Training blew up (non-finite loss). Carries the offending epoch.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct MlpConfig {
  std::vector<int> hidden_sizes = {64};
  double dropout_rate = 0.0;
  bool dropout_last_layer_only = false;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 100;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// Point-prediction MLP (rectifier activations, Adam). Labels are
/// standardized internally; predictions come back in original units.
class MlpRegressor {
 public:
  MlpRegressor(MlpConfig config, std::size_t input_dim);

  double predict(std::span<const double> x) const;
  /// Stochastic forward passes with dropout active; requires a positive
  /// dropout rate. Deterministic given the seed.
  SampleVector predict_mc(std::span<const double> x, int passes,
                          std::uint64_t seed) const;

  const MlpConfig& config() const { return config_; }
  double validation_rmse() const { return val_rmse_; }
  nn::Net& net() { return net_; }
  const nn::Net& net() const { return net_; }
  double label_mean() const { return label_mean_; }
  double label_stddev() const { return label_stddev_; }
  void set_label_moments(double mean, double stddev);

 private:
  friend MlpRegressor train_mlp(const TabularDataset&, const TabularDataset&,
                                const MlpConfig&);
  MlpConfig config_;
  nn::Net net_;
  double label_mean_ = 0.0;
  double label_stddev_ = 1.0;
  double val_rmse_ = 0.0;
};

/// Deterministic given config.seed; records final validation RMSE (original
/// label units). Throws TrainingDivergence on non-finite loss.
MlpRegressor train_mlp(const TabularDataset& train, const TabularDataset& val,
                       const MlpConfig& config);

/// N independently seeded members (seed_m = config.seed * 1000003 + m).
std::vector<MlpRegressor> train_ensemble(const TabularDataset& train,
                                         const TabularDataset& val,
                                         const MlpConfig& config, int members);

/// Point predictions in member-index order.
SampleVector ensemble_predict(const std::vector<MlpRegressor>& models,
                              std::span<const double> x);

/// Dropout-active forward passes; rejects models trained without dropout.
SampleVector mc_dropout_predict(const MlpRegressor& model, std::span<const double> x,
                                int passes = 200, std::uint64_t seed = 0);

/// Random-search space over MlpConfig. Units and learning rate are sampled
/// log-uniformly. Dropout is sampled only when sample_dropout is set;
/// otherwise the rate is pinned to 0.
struct SearchSpace {
  std::vector<int> layer_choices = {1, 2, 3};
  int units_min = 16;
  int units_max = 256;
  double lr_min = 1e-4;
  double lr_max = 1e-2;
  bool sample_dropout = false;
  bool dropout_last_layer_only = false;
  double dropout_min = 0.05;
  double dropout_max = 0.5;
  std::vector<int> batch_choices = {32, 64, 128};
  int epochs_min = 40;
  int epochs_max = 400;
  double weight_decay = 0.0;

  MlpConfig sample(Rng& rng) const;
};

struct TrialRecord {
  MlpConfig config;
  double val_rmse = 0.0;
  std::string status = "ok";
};

struct SearchResult {
  MlpConfig best;
  double best_rmse = 0.0;
  std::vector<TrialRecord> trials;
};

/// `trials` draws from the space, each trained on train and scored by
/// validation RMSE; the champion minimizes it. Diverged trials are recorded
/// as failed; throws only if every trial diverged.
SearchResult random_search(const TabularDataset& train, const TabularDataset& val,
                           int trials, const SearchSpace& space, std::uint64_t seed);

struct SviConfig {
  std::vector<int> hidden_sizes = {64};
  double learning_rate = 1e-2;
  int batch_size = 32;
  int epochs = 100;
  double prior_sigma = 1.0;
  double kl_weight = 1.0;
  bool last_layer_only = false;
  int mc_samples = 100;  // prediction-time passes
  std::uint64_t seed = 0;
};

/// Mean-field variational regressor with a learned homoskedastic
/// observation-noise variance (the aleatoric term).
class SviRegressor {
 public:
  SviRegressor(SviConfig config, std::size_t input_dim);

  /// Mean of MC means; epistemic variance = variance of the MC means;
  /// aleatoric variance = learned observation noise. Original label units.
  GaussianPrediction predict(std::span<const double> x, int mc_samples,
                             std::uint64_t seed) const;
  GaussianPrediction predict(std::span<const double> x) const;

  double noise_variance() const;  // original label units
  const SviConfig& config() const { return config_; }
  double validation_rmse() const { return val_rmse_; }
  nn::Net& net() { return net_; }
  const nn::Net& net() const { return net_; }
  double label_mean() const { return label_mean_; }
  double label_stddev() const { return label_stddev_; }
  double log_noise_var_standardized() const { return log_noise_var_; }

 private:
  friend SviRegressor train_svi(const TabularDataset&, const TabularDataset&,
                                const SviConfig&);
  SviConfig config_;
  nn::Net net_;
  double log_noise_var_ = 0.0;  // standardized-label space
  double label_mean_ = 0.0;
  double label_stddev_ = 1.0;
  double val_rmse_ = 0.0;
};

/// ELBO training (reparameterized gradients, closed-form KL against the
/// N(0, prior_sigma^2) prior, one MC sample per step, KL scaled by 1/n).
SviRegressor train_svi(const TabularDataset& train, const TabularDataset& val,
                       const SviConfig& config);

/// Post-hoc temperature, fit on validation logits by golden-section search
/// on log T (T clamped to [0.05, 20], tolerance 1e-4).
double fit_temperature(const Matrix& logits, std::span<const int> labels);
Matrix apply_temperature(const Matrix& logits, double temperature);

}  // namespace uqcov
