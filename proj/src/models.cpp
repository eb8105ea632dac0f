#include "uqcov/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uqcov {

namespace {

nn::Net build_regression_net(std::size_t input_dim, const MlpConfig& cfg) {
  nn::Net net;
  std::size_t prev = input_dim;
  const std::size_t n_hidden = cfg.hidden_sizes.size();
  for (std::size_t h = 0; h < n_hidden; ++h) {
    const auto units = static_cast<std::size_t>(cfg.hidden_sizes[h]);
    net.layers.push_back(std::make_unique<nn::Dense>(prev, units));
    net.layers.push_back(std::make_unique<nn::Relu>(units));
    const bool want_dropout =
        cfg.dropout_rate > 0.0 &&
        (!cfg.dropout_last_layer_only || h + 1 == n_hidden);
    if (want_dropout) {
      net.layers.push_back(std::make_unique<nn::Dropout>(units, cfg.dropout_rate));
    }
    prev = units;
  }
  net.layers.push_back(std::make_unique<nn::Dense>(prev, 1));
  return net;
}

nn::Net build_svi_net(std::size_t input_dim, const SviConfig& cfg) {
  nn::Net net;
  std::size_t prev = input_dim;
  for (int units_i : cfg.hidden_sizes) {
    const auto units = static_cast<std::size_t>(units_i);
    if (cfg.last_layer_only) {
      net.layers.push_back(std::make_unique<nn::Dense>(prev, units));
    } else {
      net.layers.push_back(
          std::make_unique<nn::VariationalDense>(prev, units, cfg.prior_sigma));
    }
    net.layers.push_back(std::make_unique<nn::Relu>(units));
    prev = units;
  }
  net.layers.push_back(std::make_unique<nn::VariationalDense>(prev, 1, cfg.prior_sigma));
  return net;
}

void check_dataset_pair(const TabularDataset& train, const TabularDataset& val) {
  if (train.size() == 0) throw std::invalid_argument("training set is empty");
  if (val.size() == 0) throw std::invalid_argument("validation set is empty");
  if (train.dim() != val.dim()) throw std::invalid_argument("train/val dimension mismatch");
}

}  // namespace

// ------------------------------------------------------------ MlpRegressor

MlpRegressor::MlpRegressor(MlpConfig config, std::size_t input_dim)
    : config_(std::move(config)), net_(build_regression_net(input_dim, config_)) {
  Rng rng(config_.seed);
  net_.init(rng);
}

void MlpRegressor::set_label_moments(double mean, double stddev) {
  label_mean_ = mean;
  label_stddev_ = stddev;
}

double MlpRegressor::predict(std::span<const double> x) const {
  nn::Workspace ws;
  net_.forward(x, ws, /*stochastic=*/false, nullptr);
  return ws.act.back()[0] * label_stddev_ + label_mean_;
}

SampleVector MlpRegressor::predict_mc(std::span<const double> x, int passes,
                                      std::uint64_t seed) const {
  if (config_.dropout_rate <= 0.0) {
    throw std::invalid_argument(
        "predict_mc: model has dropout rate 0; stochastic passes are degenerate");
  }
  if (passes < 1) throw std::invalid_argument("predict_mc: passes must be >= 1");
  Rng rng(seed);
  nn::Workspace ws;
  SampleVector out;
  out.reserve(passes);
  for (int p = 0; p < passes; ++p) {
    net_.forward(x, ws, /*stochastic=*/true, &rng);
    out.push_back(ws.act.back()[0] * label_stddev_ + label_mean_);
  }
  return out;
}

MlpRegressor train_mlp(const TabularDataset& train, const TabularDataset& val,
                       const MlpConfig& config) {
  check_dataset_pair(train, val);
  if (config.learning_rate <= 0.0) throw std::invalid_argument("train_mlp: learning rate");
  if (config.batch_size < 1) throw std::invalid_argument("train_mlp: batch size");
  for (int h : config.hidden_sizes) {
    if (h < 1) throw std::invalid_argument("train_mlp: hidden sizes must be positive");
  }

  MlpRegressor model(config, train.dim());
  const double y_mean = mean(train.labels);
  const double y_std = train.labels.size() >= 2
                           ? std::max(sample_stddev(train.labels), 1e-12)
                           : 1.0;
  model.set_label_moments(y_mean, y_std);

  nn::Net& net = model.net();
  nn::Adam adam(net.param_count(), config.learning_rate, config.weight_decay);
  auto blocks = net.param_blocks();

  Rng order_rng = Rng(config.seed).fork(1);
  Rng dropout_rng = Rng(config.seed).fork(2);
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  nn::Workspace ws;
  std::vector<double> dldy(1);
  const auto n = train.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(idx, order_rng);
    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < n) {
      const std::size_t bsz = std::min<std::size_t>(config.batch_size, n - pos);
      net.zero_grads();
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t i = idx[pos + b];
        net.forward(train.features.row(i), ws, /*stochastic=*/true, &dropout_rng);
        const double target = (train.labels[i] - y_mean) / y_std;
        double df = 0.0;
        batch_loss += nn::mse_loss(ws.act.back()[0], target, df);
        dldy[0] = df / static_cast<double>(bsz);
        net.backward(ws, dldy);
      }
      adam.step(blocks);
      epoch_loss += batch_loss;
      pos += bsz;
    }
    if (!std::isfinite(epoch_loss)) {
      throw TrainingDivergence(epoch, "train_mlp: non-finite loss at epoch " +
                                          std::to_string(epoch));
    }
  }

  double sse = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const double d = model.predict(val.features.row(i)) - val.labels[i];
    sse += d * d;
  }
  model.val_rmse_ = std::sqrt(sse / static_cast<double>(val.size()));
  return model;
}

std::vector<MlpRegressor> train_ensemble(const TabularDataset& train,
                                         const TabularDataset& val,
                                         const MlpConfig& config, int members) {
  if (members < 2) throw std::invalid_argument("train_ensemble: need >= 2 members");
  std::vector<MlpRegressor> out;
  out.reserve(members);
  for (int m = 0; m < members; ++m) {
    MlpConfig c = config;
    c.seed = config.seed * 1000003ull + static_cast<std::uint64_t>(m);
    out.push_back(train_mlp(train, val, c));
  }
  return out;
}

SampleVector ensemble_predict(const std::vector<MlpRegressor>& models,
                              std::span<const double> x) {
  if (models.size() < 2) throw std::invalid_argument("ensemble_predict: need >= 2 models");
  SampleVector out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back(m.predict(x));
  return out;
}

SampleVector mc_dropout_predict(const MlpRegressor& model, std::span<const double> x,
                                int passes, std::uint64_t seed) {
  return model.predict_mc(x, passes, seed);
}

// ------------------------------------------------------------ random search

MlpConfig SearchSpace::sample(Rng& rng) const {
  MlpConfig c;
  const int layers = layer_choices[rng.uniform_index(layer_choices.size())];
  const double lu = std::log(static_cast<double>(units_min));
  const double hu = std::log(static_cast<double>(units_max));
  const int units = std::max(1, static_cast<int>(std::lround(std::exp(rng.uniform(lu, hu)))));
  c.hidden_sizes.assign(layers, units);
  c.learning_rate = std::exp(rng.uniform(std::log(lr_min), std::log(lr_max)));
  if (sample_dropout) {
    c.dropout_rate = rng.uniform(dropout_min, dropout_max);
    c.dropout_last_layer_only = dropout_last_layer_only;
  }
  c.batch_size = batch_choices[rng.uniform_index(batch_choices.size())];
  c.epochs = epochs_min + static_cast<int>(rng.uniform_index(
                              static_cast<std::uint64_t>(epochs_max - epochs_min + 1)));
  c.weight_decay = weight_decay;
  return c;
}

SearchResult random_search(const TabularDataset& train, const TabularDataset& val,
                           int trials, const SearchSpace& space, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("random_search: trials must be >= 1");
  SearchResult result;
  result.best_rmse = std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    TrialRecord rec;
    rec.config = space.sample(rng);
    rec.config.seed = seed * 1000003ull + static_cast<std::uint64_t>(t);
    try {
      const MlpRegressor model = train_mlp(train, val, rec.config);
      rec.val_rmse = model.validation_rmse();
    } catch (const TrainingDivergence& e) {
      rec.status = std::string("diverged: ") + e.what();
      rec.val_rmse = std::numeric_limits<double>::infinity();
    }
    if (rec.status == "ok" && rec.val_rmse < result.best_rmse) {
      result.best_rmse = rec.val_rmse;
      result.best = rec.config;
    }
    result.trials.push_back(std::move(rec));
  }
  if (!std::isfinite(result.best_rmse)) {
    throw std::runtime_error("random_search: every trial diverged");
  }
  return result;
}

// ------------------------------------------------------------ SviRegressor

SviRegressor::SviRegressor(SviConfig config, std::size_t input_dim)
    : config_(std::move(config)), net_(build_svi_net(input_dim, config_)) {
  Rng rng(config_.seed);
  net_.init(rng);
}

GaussianPrediction SviRegressor::predict(std::span<const double> x, int mc_samples,
                                         std::uint64_t seed) const {
  if (mc_samples < 2) throw std::invalid_argument("svi_predict: mc_samples must be >= 2");
  Rng rng(seed);
  nn::Workspace ws;
  SampleVector means;
  means.reserve(mc_samples);
  for (int s = 0; s < mc_samples; ++s) {
    net_.forward(x, ws, /*stochastic=*/true, &rng);
    means.push_back(ws.act.back()[0]);
  }
  GaussianPrediction pred;
  pred.mean = mean(means) * label_stddev_ + label_mean_;
  pred.epistemic_variance = sample_variance(means) * label_stddev_ * label_stddev_;
  pred.aleatoric_variance = noise_variance();
  return pred;
}

GaussianPrediction SviRegressor::predict(std::span<const double> x) const {
  return predict(x, config_.mc_samples, config_.seed ^ 0x5eed5eedull);
}

double SviRegressor::noise_variance() const {
  return std::exp(log_noise_var_) * label_stddev_ * label_stddev_;
}

SviRegressor train_svi(const TabularDataset& train, const TabularDataset& val,
                       const SviConfig& config) {
  check_dataset_pair(train, val);
  if (config.learning_rate <= 0.0) throw std::invalid_argument("train_svi: learning rate");
  if (config.batch_size < 1) throw std::invalid_argument("train_svi: batch size");

  SviRegressor model(config, train.dim());
  const double y_mean = mean(train.labels);
  const double y_std = train.labels.size() >= 2
                           ? std::max(sample_stddev(train.labels), 1e-12)
                           : 1.0;
  model.label_mean_ = y_mean;
  model.label_stddev_ = y_std;

  nn::Net& net = model.net();
  nn::Adam adam(net.param_count(), config.learning_rate);
  auto blocks = net.param_blocks();

  // Observation-noise parameter gets its own Adam state.
  double log_var = std::log(0.5);
  double lv_m = 0.0, lv_v = 0.0;
  long lv_t = 0;

  Rng order_rng = Rng(config.seed).fork(1);
  Rng sample_rng = Rng(config.seed).fork(2);
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  nn::Workspace ws;
  std::vector<double> dldy(1);
  const auto n = train.size();
  const double kl_scale = config.kl_weight / static_cast<double>(n);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(idx, order_rng);
    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < n) {
      const std::size_t bsz = std::min<std::size_t>(config.batch_size, n - pos);
      net.zero_grads();
      double dlogvar_batch = 0.0;
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t i = idx[pos + b];
        net.forward(train.features.row(i), ws, /*stochastic=*/true, &sample_rng);
        const double target = (train.labels[i] - y_mean) / y_std;
        double df = 0.0, dlv = 0.0;
        epoch_loss += nn::gaussian_nll(ws.act.back()[0], target, log_var, df, dlv);
        dldy[0] = df / static_cast<double>(bsz);
        dlogvar_batch += dlv / static_cast<double>(bsz);
        net.backward(ws, dldy);
      }
      net.add_kl_grad(kl_scale);
      adam.step(blocks);
      // Scalar Adam step for log noise variance.
      ++lv_t;
      lv_m = 0.9 * lv_m + 0.1 * dlogvar_batch;
      lv_v = 0.999 * lv_v + 0.001 * dlogvar_batch * dlogvar_batch;
      const double mhat = lv_m / (1.0 - std::pow(0.9, lv_t));
      const double vhat = lv_v / (1.0 - std::pow(0.999, lv_t));
      log_var -= config.learning_rate * mhat / (std::sqrt(vhat) + 1e-8);
      pos += bsz;
    }
    epoch_loss += config.kl_weight * net.kl();
    if (!std::isfinite(epoch_loss)) {
      throw TrainingDivergence(epoch, "train_svi: non-finite ELBO at epoch " +
                                          std::to_string(epoch));
    }
  }
  model.log_noise_var_ = log_var;

  // Validation RMSE from the posterior-mean forward pass.
  nn::Workspace vws;
  double sse = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    net.forward(val.features.row(i), vws, /*stochastic=*/false, nullptr);
    const double pred = vws.act.back()[0] * y_std + y_mean;
    const double d = pred - val.labels[i];
    sse += d * d;
  }
  model.val_rmse_ = std::sqrt(sse / static_cast<double>(val.size()));
  return model;
}

// ------------------------------------------------------------ temperature

namespace {

double nll_at_temperature(const Matrix& logits, std::span<const int> labels, double t) {
  std::vector<double> scaled(logits.cols), probs(logits.cols);
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    for (std::size_t k = 0; k < logits.cols; ++k) scaled[k] = logits(i, k) / t;
    nn::softmax(scaled, probs);
    acc += -std::log(std::max(probs[labels[i]], 1e-300));
  }
  return acc / static_cast<double>(logits.rows);
}

}  // namespace

double fit_temperature(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows != labels.size() || logits.rows == 0) {
    throw std::invalid_argument("fit_temperature: size mismatch");
  }
  for (double v : logits.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("fit_temperature: non-finite logit");
  }
  // Golden-section on log T over [log 0.05, log 20].
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(0.05), b = std::log(20.0);
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = nll_at_temperature(logits, labels, std::exp(c));
  double fd = nll_at_temperature(logits, labels, std::exp(d));
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = nll_at_temperature(logits, labels, std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = nll_at_temperature(logits, labels, std::exp(d));
    }
  }
  return std::exp(0.5 * (a + b));
}

Matrix apply_temperature(const Matrix& logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("apply_temperature: T must be positive");
  Matrix probs(logits.rows, logits.cols);
  std::vector<double> scaled(logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    for (std::size_t k = 0; k < logits.cols; ++k) scaled[k] = logits(i, k) / temperature;
    nn::softmax(scaled, probs.row(i));
  }
  return probs;
}

}  // namespace uqcov
