#include "uqcov/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "uqcov/models.hpp"

namespace uqcov {

namespace {

struct LenetDims {
  int c1_h, c1_w, p1_h, p1_w, c2_h, c2_w, p2_h, p2_w;
  std::size_t flat;
};

LenetDims lenet_dims(int h, int w, int k, int c2_channels) {
  LenetDims d;
  d.c1_h = h - k + 1;
  d.c1_w = w - k + 1;
  if (d.c1_h % 2 || d.c1_w % 2) throw std::invalid_argument("classifier: odd conv1 output");
  d.p1_h = d.c1_h / 2;
  d.p1_w = d.c1_w / 2;
  d.c2_h = d.p1_h - k + 1;
  d.c2_w = d.p1_w - k + 1;
  if (d.c2_h % 2 || d.c2_w % 2) throw std::invalid_argument("classifier: odd conv2 output");
  d.p2_h = d.c2_h / 2;
  d.p2_w = d.c2_w / 2;
  d.flat = static_cast<std::size_t>(c2_channels) * d.p2_h * d.p2_w;
  return d;
}

nn::Net build_lenet(int h, int w, int channels, int num_classes,
                    const ClassifierConfig& cfg) {
  const LenetDims d = lenet_dims(h, w, cfg.kernel, cfg.conv2_channels);
  const bool var_all = cfg.variant == ClassifierVariant::svi;
  const bool var_last = var_all || cfg.variant == ClassifierVariant::ll_svi;
  const bool drop_all = cfg.variant == ClassifierVariant::dropout;
  const bool drop_last = drop_all || cfg.variant == ClassifierVariant::ll_dropout;

  nn::Net net;
  if (var_all) {
    net.layers.push_back(std::make_unique<nn::VariationalConv2d>(
        channels, cfg.conv1_channels, cfg.kernel, h, w, cfg.prior_sigma));
  } else {
    net.layers.push_back(
        std::make_unique<nn::Conv2d>(channels, cfg.conv1_channels, cfg.kernel, h, w));
  }
  const std::size_t c1_size = static_cast<std::size_t>(cfg.conv1_channels) * d.c1_h * d.c1_w;
  net.layers.push_back(std::make_unique<nn::Relu>(c1_size));
  net.layers.push_back(std::make_unique<nn::AvgPool2>(cfg.conv1_channels, d.c1_h, d.c1_w));
  const std::size_t p1_size = static_cast<std::size_t>(cfg.conv1_channels) * d.p1_h * d.p1_w;
  if (drop_all && cfg.dropout_rate > 0.0) {
    net.layers.push_back(std::make_unique<nn::Dropout>(p1_size, cfg.dropout_rate));
  }
  if (var_all) {
    net.layers.push_back(std::make_unique<nn::VariationalConv2d>(
        cfg.conv1_channels, cfg.conv2_channels, cfg.kernel, d.p1_h, d.p1_w,
        cfg.prior_sigma));
  } else {
    net.layers.push_back(std::make_unique<nn::Conv2d>(
        cfg.conv1_channels, cfg.conv2_channels, cfg.kernel, d.p1_h, d.p1_w));
  }
  const std::size_t c2_size = static_cast<std::size_t>(cfg.conv2_channels) * d.c2_h * d.c2_w;
  net.layers.push_back(std::make_unique<nn::Relu>(c2_size));
  net.layers.push_back(std::make_unique<nn::AvgPool2>(cfg.conv2_channels, d.c2_h, d.c2_w));
  if (drop_last && cfg.dropout_rate > 0.0) {
    net.layers.push_back(std::make_unique<nn::Dropout>(d.flat, cfg.dropout_rate));
  }
  if (var_last) {
    net.layers.push_back(std::make_unique<nn::VariationalDense>(
        d.flat, static_cast<std::size_t>(num_classes), cfg.prior_sigma));
  } else {
    net.layers.push_back(
        std::make_unique<nn::Dense>(d.flat, static_cast<std::size_t>(num_classes)));
  }
  return net;
}

void zero_head(nn::Net& net) {
  auto blocks = net.param_blocks();
  const std::string last_prefix = "layer" + std::to_string(net.layers.size() - 1);
  for (auto& b : blocks) {
    if (b.name.rfind(last_prefix, 0) == 0 && b.name.find(".rho") == std::string::npos) {
      std::fill(b.values.begin(), b.values.end(), 0.0);
    }
  }
}

bool variant_is_stochastic(ClassifierVariant v) {
  return v == ClassifierVariant::dropout || v == ClassifierVariant::ll_dropout ||
         v == ClassifierVariant::svi || v == ClassifierVariant::ll_svi;
}

void train_one_net(nn::Net& net, const ImageDataset& train, const ClassifierConfig& cfg,
                   std::uint64_t seed, bool variational) {
  nn::Adam adam(net.param_count(), cfg.learning_rate);
  auto blocks = net.param_blocks();
  Rng order_rng = Rng(seed).fork(1);
  Rng pass_rng = Rng(seed).fork(2);
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  const int k = train.num_classes;
  nn::Workspace ws;
  std::vector<double> probs(k), dlogits(k), dldy(k);
  const std::size_t n = train.size();
  const double kl_scale = variational ? cfg.kl_weight / static_cast<double>(n) : 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(idx, order_rng);
    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < n) {
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, n - pos);
      net.zero_grads();
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t i = idx[pos + b];
        net.forward(train.images[i].pixels, ws, /*stochastic=*/true, &pass_rng);
        epoch_loss += nn::softmax_ce(ws.act.back(), train.labels[i], probs, dlogits);
        for (int c = 0; c < k; ++c) dldy[c] = dlogits[c] / static_cast<double>(bsz);
        net.backward(ws, dldy);
      }
      if (variational) net.add_kl_grad(kl_scale);
      adam.step(blocks);
      pos += bsz;
    }
    if (variational) epoch_loss += cfg.kl_weight * net.kl();
    if (!std::isfinite(epoch_loss)) {
      throw TrainingDivergence(epoch, "train_classifier: non-finite loss at epoch " +
                                          std::to_string(epoch));
    }
  }
}

}  // namespace

ClassifierVariant classifier_variant_from_name(const std::string& name) {
  if (name == "vanilla") return ClassifierVariant::vanilla;
  if (name == "dropout") return ClassifierVariant::dropout;
  if (name == "ll_dropout") return ClassifierVariant::ll_dropout;
  if (name == "svi") return ClassifierVariant::svi;
  if (name == "ll_svi") return ClassifierVariant::ll_svi;
  if (name == "ensemble") return ClassifierVariant::ensemble;
  throw std::invalid_argument("unknown classifier variant: " + name);
}

std::string classifier_variant_name(ClassifierVariant v) {
  switch (v) {
    case ClassifierVariant::vanilla: return "vanilla";
    case ClassifierVariant::dropout: return "dropout";
    case ClassifierVariant::ll_dropout: return "ll_dropout";
    case ClassifierVariant::svi: return "svi";
    case ClassifierVariant::ll_svi: return "ll_svi";
    case ClassifierVariant::ensemble: return "ensemble";
  }
  throw std::invalid_argument("unknown classifier variant");
}

Classifier::Classifier(ClassifierConfig config, int height, int width, int channels,
                       int num_classes)
    : config_(std::move(config)), height_(height), width_(width),
      channels_(channels), num_classes_(num_classes) {
  if (num_classes < 2) throw std::invalid_argument("Classifier: need >= 2 classes");
  const int members =
      config_.variant == ClassifierVariant::ensemble ? config_.ensemble_members : 1;
  if (members < 1) throw std::invalid_argument("Classifier: ensemble members");
  for (int m = 0; m < members; ++m) {
    nn::Net net = build_lenet(height, width, channels, num_classes, config_);
    Rng rng(config_.seed * 1000003ull + static_cast<std::uint64_t>(m));
    net.init(rng);
    if (config_.zero_init_head) zero_head(net);
    nets_.push_back(std::move(net));
  }
}

void Classifier::check_image(const Image& img) const {
  if (img.height != height_ || img.width != width_ || img.channels != channels_) {
    throw std::invalid_argument("Classifier: image shape mismatch");
  }
}

std::vector<double> Classifier::predict_probs(const Image& img, int mc_passes,
                                              std::uint64_t seed) const {
  check_image(img);
  const auto k = static_cast<std::size_t>(num_classes_);
  std::vector<double> acc(k, 0.0), probs(k);
  nn::Workspace ws;
  if (config_.variant == ClassifierVariant::ensemble) {
    for (const auto& net : nets_) {
      net.forward(img.pixels, ws, /*stochastic=*/false, nullptr);
      nn::softmax(ws.act.back(), probs);
      for (std::size_t c = 0; c < k; ++c) acc[c] += probs[c];
    }
    for (double& v : acc) v /= static_cast<double>(nets_.size());
    return acc;
  }
  if (!variant_is_stochastic(config_.variant)) {
    nets_[0].forward(img.pixels, ws, /*stochastic=*/false, nullptr);
    nn::softmax(ws.act.back(), acc);
    return acc;
  }
  if (mc_passes < 1) throw std::invalid_argument("predict_probs: mc_passes >= 1");
  Rng rng(seed);
  for (int p = 0; p < mc_passes; ++p) {
    nets_[0].forward(img.pixels, ws, /*stochastic=*/true, &rng);
    nn::softmax(ws.act.back(), probs);
    for (std::size_t c = 0; c < k; ++c) acc[c] += probs[c];
  }
  for (double& v : acc) v /= static_cast<double>(mc_passes);
  return acc;
}

std::vector<double> Classifier::predict_probs(const Image& img) const {
  return predict_probs(img, config_.mc_passes, config_.seed ^ 0x9e3779b9ull);
}

std::vector<double> Classifier::predict_logits(const Image& img) const {
  check_image(img);
  nn::Workspace ws;
  nets_[0].forward(img.pixels, ws, /*stochastic=*/false, nullptr);
  return ws.act.back();
}

Classifier train_classifier(const ImageDataset& train, const ImageDataset& val,
                            const ClassifierConfig& config) {
  if (train.size() == 0) throw std::invalid_argument("train_classifier: empty training set");
  if (train.num_classes < 2) throw std::invalid_argument("train_classifier: need >= 2 classes");
  for (int lab : train.labels) {
    if (lab < 0 || lab >= train.num_classes) {
      throw std::invalid_argument("train_classifier: label out of range");
    }
  }
  const Image& first = train.images.front();
  Classifier model(config, first.height, first.width, first.channels, train.num_classes);

  const bool variational = config.variant == ClassifierVariant::svi ||
                           config.variant == ClassifierVariant::ll_svi;
  for (std::size_t m = 0; m < model.nets_.size(); ++m) {
    train_one_net(model.nets_[m], train, config,
                  config.seed * 1000003ull + static_cast<std::uint64_t>(m), variational);
  }

  if (val.size() > 0) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const auto probs = model.predict_probs(val.images[i], 8, config.seed ^ i);
      const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
      if (static_cast<int>(best) == val.labels[i]) ++hit;
    }
    model.val_accuracy_ = static_cast<double>(hit) / static_cast<double>(val.size());
  }
  return model;
}

Matrix predict_probs_matrix(const Classifier& model, const ImageDataset& data,
                            int mc_passes, std::uint64_t base_seed) {
  Matrix out(data.size(), static_cast<std::size_t>(model.num_classes()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto probs = model.predict_probs(data.images[i], mc_passes, base_seed + i);
    std::copy(probs.begin(), probs.end(), out.row(i).begin());
  }
  return out;
}

Matrix predict_logits_matrix(const Classifier& model, const ImageDataset& data) {
  Matrix out(data.size(), static_cast<std::size_t>(model.num_classes()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = model.predict_logits(data.images[i]);
    std::copy(logits.begin(), logits.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace uqcov
