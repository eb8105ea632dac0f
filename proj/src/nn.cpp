#include "uqcov/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace uqcov::nn {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------- Net

void Net::check_wiring() const {
  if (layers.empty()) throw std::logic_error("Net: no layers");
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l]->in_size() != layers[l - 1]->out_size()) {
      throw std::logic_error("Net: layer size mismatch at layer " + std::to_string(l));
    }
  }
}

void Net::init(Rng& rng) {
  check_wiring();
  for (auto& l : layers) l->init(rng);
}

void Net::prepare(Workspace& ws) const {
  ws.act.resize(layers.size() + 1);
  ws.grad.resize(layers.size() + 1);
  ws.scratch.resize(layers.size());
  ws.act[0].resize(layers[0]->in_size());
  ws.grad[0].resize(layers[0]->in_size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    ws.act[l + 1].resize(layers[l]->out_size());
    ws.grad[l + 1].resize(layers[l]->out_size());
    ws.scratch[l].resize(layers[l]->scratch_size());
  }
}

void Net::forward(std::span<const double> x, Workspace& ws, bool stochastic,
                  Rng* rng) const {
  if (ws.act.size() != layers.size() + 1) prepare(ws);
  if (x.size() != layers[0]->in_size()) throw std::invalid_argument("Net: input size");
  std::copy(x.begin(), x.end(), ws.act[0].begin());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l]->forward(ws.act[l].data(), ws.act[l + 1].data(),
                       ws.scratch[l].empty() ? nullptr : ws.scratch[l].data(),
                       stochastic, rng);
  }
}

void Net::backward(Workspace& ws, std::span<const double> dldy) {
  std::copy(dldy.begin(), dldy.end(), ws.grad.back().begin());
  for (std::size_t l = layers.size(); l-- > 0;) {
    layers[l]->backward(ws.act[l].data(),
                        ws.scratch[l].empty() ? nullptr : ws.scratch[l].data(),
                        ws.grad[l + 1].data(), ws.grad[l].data());
  }
}

void Net::zero_grads() {
  for (auto& b : param_blocks()) {
    std::fill(b.grads.begin(), b.grads.end(), 0.0);
  }
}

std::vector<ParamBlock> Net::param_blocks() {
  std::vector<ParamBlock> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto blocks = layers[l]->param_blocks("layer" + std::to_string(l));
    out.insert(out.end(), blocks.begin(), blocks.end());
  }
  return out;
}

std::size_t Net::param_count() {
  std::size_t n = 0;
  for (const auto& b : param_blocks()) n += b.values.size();
  return n;
}

std::vector<double> Net::flat_params() {
  std::vector<double> out;
  for (const auto& b : param_blocks()) out.insert(out.end(), b.values.begin(), b.values.end());
  return out;
}

void Net::set_flat_params(std::span<const double> p) {
  std::size_t off = 0;
  for (auto& b : param_blocks()) {
    if (off + b.values.size() > p.size()) throw std::invalid_argument("set_flat_params: size");
    std::copy(p.begin() + off, p.begin() + off + b.values.size(), b.values.begin());
    off += b.values.size();
  }
  if (off != p.size()) throw std::invalid_argument("set_flat_params: size");
}

std::vector<double> Net::flat_grads() {
  std::vector<double> out;
  for (const auto& b : param_blocks()) out.insert(out.end(), b.grads.begin(), b.grads.end());
  return out;
}

double Net::kl() const {
  double acc = 0.0;
  for (const auto& l : layers) acc += l->kl();
  return acc;
}

void Net::add_kl_grad(double weight) {
  for (auto& l : layers) l->add_kl_grad(weight);
}

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in, std::size_t out)
    : in_(in), out_(out), w_(in * out, 0.0), b_(out, 0.0), dw_(in * out, 0.0),
      db_(out, 0.0) {}

void Dense::init(Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(in_));
  for (double& w : w_) w = rng.normal(0.0, scale);
  std::fill(b_.begin(), b_.end(), 0.0);
}

void Dense::forward(const double* x, double* y, double*, bool, Rng*) const {
  for (std::size_t i = 0; i < out_; ++i) {
    const double* wi = w_.data() + i * in_;
    double acc = b_[i];
    for (std::size_t j = 0; j < in_; ++j) acc += wi[j] * x[j];
    y[i] = acc;
  }
}

void Dense::backward(const double* x, const double*, const double* dy, double* dx) {
  std::fill(dx, dx + in_, 0.0);
  for (std::size_t i = 0; i < out_; ++i) {
    const double g = dy[i];
    db_[i] += g;
    double* dwi = dw_.data() + i * in_;
    const double* wi = w_.data() + i * in_;
    for (std::size_t j = 0; j < in_; ++j) {
      dwi[j] += g * x[j];
      dx[j] += g * wi[j];
    }
  }
}

std::vector<ParamBlock> Dense::param_blocks(const std::string& prefix) {
  return {{prefix + ".w", w_, dw_}, {prefix + ".b", b_, db_}};
}

// ---------------------------------------------------------------- Relu

void Relu::forward(const double* x, double* y, double*, bool, Rng*) const {
  for (std::size_t i = 0; i < n_; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void Relu::backward(const double* x, const double*, const double* dy, double* dx) {
  for (std::size_t i = 0; i < n_; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

// ---------------------------------------------------------------- Dropout

Dropout::Dropout(std::size_t n, double rate) : n_(n), rate_(rate) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("Dropout: rate in [0,1)");
}

void Dropout::forward(const double* x, double* y, double* scratch, bool stochastic,
                      Rng* rng) const {
  if (!stochastic || rate_ == 0.0) {
    std::copy(x, x + n_, y);
    if (scratch) std::fill(scratch, scratch + n_, 1.0);
    return;
  }
  const double keep = 1.0 - rate_;
  for (std::size_t i = 0; i < n_; ++i) {
    const double m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    scratch[i] = m;
    y[i] = x[i] * m;
  }
}

void Dropout::backward(const double*, const double* scratch, const double* dy,
                       double* dx) {
  for (std::size_t i = 0; i < n_; ++i) dx[i] = dy[i] * scratch[i];
}

// ------------------------------------------------------ VariationalDense

VariationalDense::VariationalDense(std::size_t in, std::size_t out, double prior_sigma)
    : in_(in), out_(out), prior_sigma_(prior_sigma), mu_(n_params(), 0.0),
      rho_(n_params(), -4.0), dmu_(n_params(), 0.0), drho_(n_params(), 0.0) {
  if (!(prior_sigma > 0.0)) throw std::invalid_argument("VariationalDense: prior sigma");
}

void VariationalDense::init(Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(in_));
  for (std::size_t i = 0; i < in_ * out_; ++i) mu_[i] = rng.normal(0.0, scale);
  for (std::size_t i = in_ * out_; i < n_params(); ++i) mu_[i] = 0.0;
  std::fill(rho_.begin(), rho_.end(), -4.0);
}

void VariationalDense::forward(const double* x, double* y, double* scratch,
                               bool stochastic, Rng* rng) const {
  const std::size_t np = n_params();
  double* eps = scratch;           // per-parameter draws
  double* sampled = scratch + np;  // realized weights
  if (stochastic) {
    for (std::size_t i = 0; i < np; ++i) {
      eps[i] = rng->normal();
      sampled[i] = mu_[i] + softplus(rho_[i]) * eps[i];
    }
  } else {
    std::fill(eps, eps + np, 0.0);
    std::copy(mu_.begin(), mu_.end(), sampled);
  }
  const double* bias = sampled + in_ * out_;
  for (std::size_t i = 0; i < out_; ++i) {
    const double* wi = sampled + i * in_;
    double acc = bias[i];
    for (std::size_t j = 0; j < in_; ++j) acc += wi[j] * x[j];
    y[i] = acc;
  }
}

void VariationalDense::backward(const double* x, const double* scratch,
                                const double* dy, double* dx) {
  const std::size_t np = n_params();
  const double* eps = scratch;
  const double* sampled = scratch + np;
  std::fill(dx, dx + in_, 0.0);
  for (std::size_t i = 0; i < out_; ++i) {
    const double g = dy[i];
    const std::size_t bias_idx = in_ * out_ + i;
    dmu_[bias_idx] += g;
    drho_[bias_idx] += g * eps[bias_idx] * sigmoid(rho_[bias_idx]);
    const double* wi = sampled + i * in_;
    for (std::size_t j = 0; j < in_; ++j) {
      const std::size_t idx = i * in_ + j;
      const double dw = g * x[j];
      dmu_[idx] += dw;
      drho_[idx] += dw * eps[idx] * sigmoid(rho_[idx]);
      dx[j] += g * wi[j];
    }
  }
}

std::vector<ParamBlock> VariationalDense::param_blocks(const std::string& prefix) {
  return {{prefix + ".mu", mu_, dmu_}, {prefix + ".rho", rho_, drho_}};
}

double VariationalDense::kl() const {
  double acc = 0.0;
  const double sp2 = prior_sigma_ * prior_sigma_;
  for (std::size_t i = 0; i < n_params(); ++i) {
    const double sq = softplus(rho_[i]);
    acc += std::log(prior_sigma_ / sq) + (sq * sq + mu_[i] * mu_[i]) / (2.0 * sp2) - 0.5;
  }
  return acc;
}

void VariationalDense::add_kl_grad(double weight) {
  const double sp2 = prior_sigma_ * prior_sigma_;
  for (std::size_t i = 0; i < n_params(); ++i) {
    const double sq = softplus(rho_[i]);
    dmu_[i] += weight * mu_[i] / sp2;
    drho_[i] += weight * (sq / sp2 - 1.0 / sq) * sigmoid(rho_[i]);
  }
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int in_h, int in_w)
    : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), in_h_(in_h), in_w_(in_w) {
  if (in_h < ksize || in_w < ksize) throw std::invalid_argument("Conv2d: kernel too large");
  w_.assign(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize, 0.0);
  b_.assign(out_ch, 0.0);
  dw_.assign(w_.size(), 0.0);
  db_.assign(b_.size(), 0.0);
}

std::size_t Conv2d::in_size() const {
  return static_cast<std::size_t>(in_ch_) * in_h_ * in_w_;
}

std::size_t Conv2d::out_size() const {
  return static_cast<std::size_t>(out_ch_) * out_h() * out_w();
}

void Conv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(in_ch_) * k_ * k_;
  const double scale = std::sqrt(2.0 / fan_in);
  for (double& w : w_) w = rng.normal(0.0, scale);
  std::fill(b_.begin(), b_.end(), 0.0);
}

namespace {

// y[oc] += sum_ic conv(x[ic], w[oc][ic]); all planes row-major.
void conv_forward_planes(const double* x, const double* w, const double* b, double* y,
                         int in_ch, int out_ch, int k, int in_h, int in_w) {
  const int oh = in_h - k + 1, ow = in_w - k + 1;
  for (int oc = 0; oc < out_ch; ++oc) {
    double* yplane = y + static_cast<std::size_t>(oc) * oh * ow;
    std::fill(yplane, yplane + static_cast<std::size_t>(oh) * ow, b[oc]);
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* xplane = x + static_cast<std::size_t>(ic) * in_h * in_w;
      const double* wk = w + ((static_cast<std::size_t>(oc) * in_ch) + ic) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = wk[ky * k + kx];
          for (int oy = 0; oy < oh; ++oy) {
            const double* xrow = xplane + (oy + ky) * in_w + kx;
            double* yrow = yplane + oy * ow;
            for (int ox = 0; ox < ow; ++ox) yrow[ox] += wv * xrow[ox];
          }
        }
      }
    }
  }
}

void conv_backward_planes(const double* x, const double* w, const double* dy,
                          double* dw, double* db, double* dx, int in_ch, int out_ch,
                          int k, int in_h, int in_w) {
  const int oh = in_h - k + 1, ow = in_w - k + 1;
  std::fill(dx, dx + static_cast<std::size_t>(in_ch) * in_h * in_w, 0.0);
  for (int oc = 0; oc < out_ch; ++oc) {
    const double* dyplane = dy + static_cast<std::size_t>(oc) * oh * ow;
    double acc = 0.0;
    for (int i = 0; i < oh * ow; ++i) acc += dyplane[i];
    db[oc] += acc;
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* xplane = x + static_cast<std::size_t>(ic) * in_h * in_w;
      double* dxplane = dx + static_cast<std::size_t>(ic) * in_h * in_w;
      const std::size_t wbase = ((static_cast<std::size_t>(oc) * in_ch) + ic) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double wgrad = 0.0;
          const double wv = w[wbase + ky * k + kx];
          for (int oy = 0; oy < oh; ++oy) {
            const double* xrow = xplane + (oy + ky) * in_w + kx;
            double* dxrow = dxplane + (oy + ky) * in_w + kx;
            const double* dyrow = dyplane + oy * ow;
            for (int ox = 0; ox < ow; ++ox) {
              wgrad += dyrow[ox] * xrow[ox];
              dxrow[ox] += dyrow[ox] * wv;
            }
          }
          dw[wbase + ky * k + kx] += wgrad;
        }
      }
    }
  }
}

}  // namespace

void Conv2d::forward(const double* x, double* y, double*, bool, Rng*) const {
  conv_forward_planes(x, w_.data(), b_.data(), y, in_ch_, out_ch_, k_, in_h_, in_w_);
}

void Conv2d::backward(const double* x, const double*, const double* dy, double* dx) {
  conv_backward_planes(x, w_.data(), dy, dw_.data(), db_.data(), dx, in_ch_, out_ch_,
                       k_, in_h_, in_w_);
}

std::vector<ParamBlock> Conv2d::param_blocks(const std::string& prefix) {
  return {{prefix + ".w", w_, dw_}, {prefix + ".b", b_, db_}};
}

// ---------------------------------------------------- VariationalConv2d

VariationalConv2d::VariationalConv2d(int in_ch, int out_ch, int ksize, int in_h,
                                     int in_w, double prior_sigma)
    : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), in_h_(in_h), in_w_(in_w),
      prior_sigma_(prior_sigma) {
  if (in_h < ksize || in_w < ksize) {
    throw std::invalid_argument("VariationalConv2d: kernel too large");
  }
  if (!(prior_sigma > 0.0)) throw std::invalid_argument("VariationalConv2d: prior sigma");
  mu_.assign(n_params(), 0.0);
  rho_.assign(n_params(), -4.0);
  dmu_.assign(n_params(), 0.0);
  drho_.assign(n_params(), 0.0);
  dws_.assign(n_params(), 0.0);
}

std::size_t VariationalConv2d::in_size() const {
  return static_cast<std::size_t>(in_ch_) * in_h_ * in_w_;
}

std::size_t VariationalConv2d::out_size() const {
  return static_cast<std::size_t>(out_ch_) * out_h() * out_w();
}

void VariationalConv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(in_ch_) * k_ * k_;
  const double scale = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < n_weights(); ++i) mu_[i] = rng.normal(0.0, scale);
  for (std::size_t i = n_weights(); i < n_params(); ++i) mu_[i] = 0.0;
  std::fill(rho_.begin(), rho_.end(), -4.0);
}

void VariationalConv2d::forward(const double* x, double* y, double* scratch,
                                bool stochastic, Rng* rng) const {
  const std::size_t np = n_params();
  double* eps = scratch;
  double* sampled = scratch + np;
  if (stochastic) {
    for (std::size_t i = 0; i < np; ++i) {
      eps[i] = rng->normal();
      sampled[i] = mu_[i] + softplus(rho_[i]) * eps[i];
    }
  } else {
    std::fill(eps, eps + np, 0.0);
    std::copy(mu_.begin(), mu_.end(), sampled);
  }
  conv_forward_planes(x, sampled, sampled + n_weights(), y, in_ch_, out_ch_, k_,
                      in_h_, in_w_);
}

void VariationalConv2d::backward(const double* x, const double* scratch,
                                 const double* dy, double* dx) {
  const std::size_t np = n_params();
  const double* eps = scratch;
  const double* sampled = scratch + np;
  std::fill(dws_.begin(), dws_.end(), 0.0);
  conv_backward_planes(x, sampled, dy, dws_.data(), dws_.data() + n_weights(), dx,
                       in_ch_, out_ch_, k_, in_h_, in_w_);
  for (std::size_t i = 0; i < np; ++i) {
    dmu_[i] += dws_[i];
    drho_[i] += dws_[i] * eps[i] * sigmoid(rho_[i]);
  }
}

std::vector<ParamBlock> VariationalConv2d::param_blocks(const std::string& prefix) {
  return {{prefix + ".mu", mu_, dmu_}, {prefix + ".rho", rho_, drho_}};
}

double VariationalConv2d::kl() const {
  double acc = 0.0;
  const double sp2 = prior_sigma_ * prior_sigma_;
  for (std::size_t i = 0; i < n_params(); ++i) {
    const double sq = softplus(rho_[i]);
    acc += std::log(prior_sigma_ / sq) + (sq * sq + mu_[i] * mu_[i]) / (2.0 * sp2) - 0.5;
  }
  return acc;
}

void VariationalConv2d::add_kl_grad(double weight) {
  const double sp2 = prior_sigma_ * prior_sigma_;
  for (std::size_t i = 0; i < n_params(); ++i) {
    const double sq = softplus(rho_[i]);
    dmu_[i] += weight * mu_[i] / sp2;
    drho_[i] += weight * (sq / sp2 - 1.0 / sq) * sigmoid(rho_[i]);
  }
}

// ------------------------------------------------------------- AvgPool2

AvgPool2::AvgPool2(int ch, int in_h, int in_w) : ch_(ch), in_h_(in_h), in_w_(in_w) {
  if (in_h % 2 != 0 || in_w % 2 != 0) {
    throw std::invalid_argument("AvgPool2: spatial dims must be even");
  }
}

std::size_t AvgPool2::in_size() const {
  return static_cast<std::size_t>(ch_) * in_h_ * in_w_;
}

std::size_t AvgPool2::out_size() const {
  return static_cast<std::size_t>(ch_) * out_h() * out_w();
}

void AvgPool2::forward(const double* x, double* y, double*, bool, Rng*) const {
  const int oh = out_h(), ow = out_w();
  for (int c = 0; c < ch_; ++c) {
    const double* xp = x + static_cast<std::size_t>(c) * in_h_ * in_w_;
    double* yp = y + static_cast<std::size_t>(c) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      for (int q = 0; q < ow; ++q) {
        const double* a = xp + (2 * r) * in_w_ + 2 * q;
        yp[r * ow + q] = 0.25 * (a[0] + a[1] + a[in_w_] + a[in_w_ + 1]);
      }
    }
  }
}

void AvgPool2::backward(const double*, const double*, const double* dy, double* dx) {
  const int oh = out_h(), ow = out_w();
  for (int c = 0; c < ch_; ++c) {
    double* dxp = dx + static_cast<std::size_t>(c) * in_h_ * in_w_;
    const double* dyp = dy + static_cast<std::size_t>(c) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      for (int q = 0; q < ow; ++q) {
        const double g = 0.25 * dyp[r * ow + q];
        double* a = dxp + (2 * r) * in_w_ + 2 * q;
        a[0] = g;
        a[1] = g;
        a[in_w_] = g;
        a[in_w_ + 1] = g;
      }
    }
  }
}

// ------------------------------------------------------------------ Adam

Adam::Adam(std::size_t n_params, double lr, double weight_decay, double beta1,
           double beta2, double eps)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(n_params, 0.0), v_(n_params, 0.0) {}

void Adam::step(std::vector<ParamBlock>& blocks) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  std::size_t off = 0;
  for (auto& b : blocks) {
    for (std::size_t i = 0; i < b.values.size(); ++i, ++off) {
      double g = b.grads[i] + wd_ * b.values[i];
      m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * g;
      v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * g * g;
      const double mhat = m_[off] / bc1;
      const double vhat = v_[off] / bc2;
      b.values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  if (off != m_.size()) throw std::logic_error("Adam: parameter count changed");
}

// ------------------------------------------------------------------ losses

double mse_loss(double f, double y, double& df) {
  const double d = f - y;
  df = d;
  return 0.5 * d * d;
}

double gaussian_nll(double f, double y, double log_var, double& df, double& dlogvar) {
  const double v = std::exp(log_var);
  const double d = y - f;
  df = -d / v;
  dlogvar = 0.5 - d * d / (2.0 * v);
  return 0.5 * (kLog2Pi + log_var) + d * d / (2.0 * v);
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - mx);
    sum += probs[k];
  }
  for (double& p : probs) p /= sum;
}

double softmax_ce(std::span<const double> logits, int label, std::span<double> probs,
                  std::span<double> dlogits) {
  softmax(logits, probs);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    dlogits[k] = probs[k] - (static_cast<int>(k) == label ? 1.0 : 0.0);
  }
  const double p = std::max(probs[label], 1e-300);
  return -std::log(p);
}

}  // namespace uqcov::nn
