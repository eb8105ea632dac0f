#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uqcov/datasets.hpp"
#include "uqcov/nn.hpp"
#include "uqcov/numerics.hpp"

namespace uqcov {

enum class ClassifierVariant { vanilla, dropout, ll_dropout, svi, ll_svi, ensemble };

ClassifierVariant classifier_variant_from_name(const std::string& name);
std::string classifier_variant_name(ClassifierVariant v);

/// Small convolutional classifier: two 5x5 convolutions (8, 16 channels by
/// default) with 2x2 average pooling and a dense softmax head.
struct ClassifierConfig {
  ClassifierVariant variant = ClassifierVariant::vanilla;
  int conv1_channels = 8;
  int conv2_channels = 16;
  int kernel = 5;
  double dropout_rate = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 5;
  double prior_sigma = 1.0;
  double kl_weight = 1.0;
  int mc_passes = 200;       // prediction-time passes for stochastic variants
  int ensemble_members = 5;
  std::uint64_t seed = 0;
  bool zero_init_head = false;  // keep the dense head at zero after init
};

class Classifier {
 public:
  Classifier(ClassifierConfig config, int height, int width, int channels,
             int num_classes);

  /// Length-K probability vector summing to 1 within 1e-6. Stochastic
  /// variants average softmax outputs over `mc_passes` seeded passes;
  /// ensembles average over members.
  std::vector<double> predict_probs(const Image& img, int mc_passes,
                                    std::uint64_t seed) const;
  std::vector<double> predict_probs(const Image& img) const;

  /// Deterministic logits (mean weights / first member); the temperature-
  /// scaling path for vanilla models.
  std::vector<double> predict_logits(const Image& img) const;

  int num_classes() const { return num_classes_; }
  const ClassifierConfig& config() const { return config_; }
  double validation_accuracy() const { return val_accuracy_; }
  std::vector<nn::Net>& nets() { return nets_; }
  const std::vector<nn::Net>& nets() const { return nets_; }

 private:
  friend Classifier train_classifier(const ImageDataset&, const ImageDataset&,
                                     const ClassifierConfig&);
  void check_image(const Image& img) const;
  ClassifierConfig config_;
  int height_, width_, channels_, num_classes_;
  std::vector<nn::Net> nets_;  // one net, or ensemble_members nets
  double val_accuracy_ = 0.0;
};

/// Softmax cross-entropy training, deterministic under config.seed.
/// Variational variants train the ELBO with KL/n per step. Throws
/// TrainingDivergence on non-finite loss.
Classifier train_classifier(const ImageDataset& train, const ImageDataset& val,
                            const ClassifierConfig& config);

/// Stacks per-sample probabilities into an n x K matrix.
Matrix predict_probs_matrix(const Classifier& model, const ImageDataset& data,
                            int mc_passes, std::uint64_t base_seed);
Matrix predict_logits_matrix(const Classifier& model, const ImageDataset& data);

}  // namespace uqcov
