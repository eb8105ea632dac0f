#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uqcov/rng.hpp"

namespace uqcov::nn {

/// Per-call buffers for a forward/backward sweep. A trained Net is const and
/// shareable across threads; each caller brings its own Workspace.
struct Workspace {
  std::vector<std::vector<double>> act;      // act[l] = input of layer l; act[L] = output
  std::vector<std::vector<double>> scratch;  // per-layer stochastic state (masks, noise)
  std::vector<std::vector<double>> grad;     // backward buffers, same shapes as act
};

struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<double> grads;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::size_t in_size() const = 0;
  virtual std::size_t out_size() const = 0;
  virtual std::size_t scratch_size() const { return 0; }

  /// Pure w.r.t. the layer; stochastic layers read `rng` and record their
  /// draws in `scratch` so backward can replay them.
  virtual void forward(const double* x, double* y, double* scratch,
                       bool stochastic, Rng* rng) const = 0;

  /// Accumulates parameter gradients (exclusive ownership during training)
  /// and writes the input gradient.
  virtual void backward(const double* x, const double* scratch,
                        const double* dy, double* dx) = 0;

  virtual void init(Rng& /*rng*/) {}
  virtual std::vector<ParamBlock> param_blocks(const std::string& /*prefix*/) { return {}; }
  virtual bool is_variational() const { return false; }
  virtual double kl() const { return 0.0; }
  /// Adds weight * dKL/dparam into the gradient buffers.
  virtual void add_kl_grad(double /*weight*/) {}
};

class Net {
 public:
  std::vector<std::unique_ptr<Layer>> layers;

  std::size_t in_size() const { return layers.front()->in_size(); }
  std::size_t out_size() const { return layers.back()->out_size(); }

  void check_wiring() const;
  void init(Rng& rng);
  void prepare(Workspace& ws) const;

  /// Runs all layers; activations land in ws (ws.act.back() is the output).
  void forward(std::span<const double> x, Workspace& ws, bool stochastic,
               Rng* rng) const;
  /// Backpropagates dLdy through the network recorded in ws, accumulating
  /// parameter gradients.
  void backward(Workspace& ws, std::span<const double> dldy);

  void zero_grads();
  std::vector<ParamBlock> param_blocks();
  std::size_t param_count();
  std::vector<double> flat_params();
  void set_flat_params(std::span<const double> p);
  std::vector<double> flat_grads();
  double kl() const;
  void add_kl_grad(double weight);
};

class Dense : public Layer {
 public:
  Dense(std::size_t in, std::size_t out);
  std::size_t in_size() const override { return in_; }
  std::size_t out_size() const override { return out_; }
  void forward(const double* x, double* y, double* scratch, bool stochastic,
               Rng* rng) const override;
  void backward(const double* x, const double* scratch, const double* dy,
                double* dx) override;
  void init(Rng& rng) override;
  std::vector<ParamBlock> param_blocks(const std::string& prefix) override;

 private:
  std::size_t in_, out_;
  std::vector<double> w_, b_, dw_, db_;
};

class Relu : public Layer {
 public:
  explicit Relu(std::size_t n) : n_(n) {}
  std::size_t in_size() const override { return n_; }
  std::size_t out_size() const override { return n_; }
  void forward(const double* x, double* y, double* scratch, bool stochastic,
               Rng* rng) const override;
  void backward(const double* x, const double* scratch, const double* dy,
                double* dx) override;

 private:
  std::size_t n_;
};

/// Inverted dropout; identity when not stochastic.
class Dropout : public Layer {
 public:
  Dropout(std::size_t n, double rate);
  std::size_t in_size() const override { return n_; }
  std::size_t out_size() const override { return n_; }
  std::size_t scratch_size() const override { return n_; }
  double rate() const { return rate_; }
  void forward(const double* x, double* y, double* scratch, bool stochastic,
               Rng* rng) const override;
  void backward(const double* x, const double* scratch, const double* dy,
                double* dx) override;

 private:
  std::size_t n_;
  double rate_;
};

/// Mean-field Gaussian posterior over weights and biases; N(0, prior_sigma^2)
/// prior; sigma = softplus(rho). One reparameterized draw per forward.
class VariationalDense : public Layer {
 public:
  VariationalDense(std::size_t in, std::size_t out, double prior_sigma);
  std::size_t in_size() const override { return in_; }
  std::size_t out_size() const override { return out_; }
  std::size_t scratch_size() const override { return 2 * n_params(); }
  void forward(const double* x, double* y, double* scratch, bool stochastic,
               Rng* rng) const override;
  void backward(const double* x, const double* scratch, const double* dy,
                double* dx) override;
  void init(Rng& rng) override;
  std::vector<ParamBlock> param_blocks(const std::string& prefix) override;
  bool is_variational() const override { return true; }
  double kl() const override;
  void add_kl_grad(double weight) override;

 private:
  std::size_t n_params() const { return in_ * out_ + out_; }
  std::size_t in_, out_;
  double prior_sigma_;
  std::vector<double> mu_, rho_, dmu_, drho_;
};

/// Valid 2-D convolution over channel-planar inputs.
class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int ksize, int in_h, int in_w);
  std::size_t in_size() const override;
  std::size_t out_size() const override;
  int out_h() const { return in_h_ - k_ + 1; }
  int out_w() const { return in_w_ - k_ + 1; }
  int out_channels() const { return out_ch_; }
  void forward(const double* x, double* y, double* scratch, bool stochastic,
               Rng* rng) const override;
  void backward(const double* x, const double* scratch, const double* dy,
                double* dx) override;
  void init(Rng& rng) override;
  std::vector<ParamBlock> param_blocks(const std::string& prefix) override;

 private:
  int in_ch_, out_ch_, k_, in_h_, in_w_;
  std::vector<double> w_, b_, dw_, db_;
};

/// Variational counterpart of Conv2d (mean-field weights + biases).
class VariationalConv2d : public Layer {
 public:
  VariationalConv2d(int in_ch, int out_ch, int ksize, int in_h, int in_w,
                    double prior_sigma);
  std::size_t in_size() const override;
  std::size_t out_size() const override;
  int out_h() const { return in_h_ - k_ + 1; }
  int out_w() const { return in_w_ - k_ + 1; }
  std::size_t scratch_size() const override { return 2 * n_params(); }
  void forward(const double* x, double* y, double* scratch, bool stochastic,
               Rng* rng) const override;
  void backward(const double* x, const double* scratch, const double* dy,
                double* dx) override;
  void init(Rng& rng) override;
  std::vector<ParamBlock> param_blocks(const std::string& prefix) override;
  bool is_variational() const override { return true; }
  double kl() const override;
  void add_kl_grad(double weight) override;

 private:
  std::size_t n_weights() const {
    return static_cast<std::size_t>(out_ch_) * in_ch_ * k_ * k_;
  }
  std::size_t n_params() const { return n_weights() + out_ch_; }
  int in_ch_, out_ch_, k_, in_h_, in_w_;
  double prior_sigma_;
  std::vector<double> mu_, rho_, dmu_, drho_, dws_;
};

/// 2x2 average pooling, stride 2; spatial dims must be even.
class AvgPool2 : public Layer {
 public:
  AvgPool2(int ch, int in_h, int in_w);
  std::size_t in_size() const override;
  std::size_t out_size() const override;
  int out_h() const { return in_h_ / 2; }
  int out_w() const { return in_w_ / 2; }
  void forward(const double* x, double* y, double* scratch, bool stochastic,
               Rng* rng) const override;
  void backward(const double* x, const double* scratch, const double* dy,
                double* dx) override;

 private:
  int ch_, in_h_, in_w_;
};

/// First-moment/second-moment optimizer over a Net's parameter blocks.
/// weight_decay adds an L2 term to the gradient before the moment update.
class Adam {
 public:
  Adam(std::size_t n_params, double lr, double weight_decay = 0.0,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<ParamBlock>& blocks);

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

double softplus(double x);
double sigmoid(double x);

/// 0.5*(f-y)^2; returns the loss, writes df.
double mse_loss(double f, double y, double& df);
/// Gaussian NLL with log-variance parameter; writes df and dlogvar.
double gaussian_nll(double f, double y, double log_var, double& df, double& dlogvar);
/// Softmax cross-entropy; fills probs and dlogits (= probs - onehot).
double softmax_ce(std::span<const double> logits, int label,
                  std::span<double> probs, std::span<double> dlogits);
void softmax(std::span<const double> logits, std::span<double> probs);

}  // namespace uqcov::nn
