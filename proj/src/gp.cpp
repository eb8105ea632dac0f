#include "uqcov/gp.hpp"

#include <algorithm>
#include <cmath>

#include "uqcov/rng.hpp"

namespace uqcov {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double sqdist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

Matrix kernel_matrix(const Matrix& x, double amp2, double ls2, double noise_var) {
  const std::size_t n = x.rows;
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = amp2 + noise_var;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = amp2 * std::exp(-0.5 * sqdist(x.row(i), x.row(j)) / ls2);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// Cholesky with escalating jitter; returns the factor and the jitter used.
Matrix cholesky_with_jitter(const Matrix& k, double* jitter_used) {
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < k.rows; ++i) mean_diag += k(i, i);
  mean_diag /= static_cast<double>(k.rows);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    try {
      if (jitter == 0.0) {
        auto l = cholesky(k);
        if (jitter_used) *jitter_used = 0.0;
        return l;
      }
      Matrix kj = k;
      for (std::size_t i = 0; i < k.rows; ++i) kj(i, i) += jitter;
      auto l = cholesky(kj);
      if (jitter_used) *jitter_used = jitter;
      return l;
    } catch (const CholeskyError&) {
      if (jitter == 0.0) {
        jitter = 1e-10 * mean_diag;
      } else {
        jitter *= 10.0;
      }
      if (jitter > 1e-4 * mean_diag) throw;
    }
  }
  throw std::runtime_error("cholesky_with_jitter: unreachable");
}

double median_pairwise_distance(const Matrix& x, Rng& rng) {
  const std::size_t n = x.rows;
  const std::size_t cap = std::min<std::size_t>(n, 300);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n > cap) shuffle(idx, rng);
  std::vector<double> dists;
  dists.reserve(cap * (cap - 1) / 2);
  for (std::size_t i = 0; i < cap; ++i) {
    for (std::size_t j = i + 1; j < cap; ++j) {
      dists.push_back(std::sqrt(sqdist(x.row(idx[i]), x.row(idx[j]))));
    }
  }
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const double med = dists[dists.size() / 2];
  return med > 1e-12 ? med : 1.0;
}

struct LogParams {
  double log_amp2;
  double log_ls;
  double log_noise;
};

/// Log marginal likelihood and its gradient w.r.t. the log parameters.
double marginal_and_grad(const Matrix& x, std::span<const double> y, const LogParams& p,
                         LogParams* grad) {
  const std::size_t n = x.rows;
  const double amp2 = std::exp(p.log_amp2);
  const double ls = std::exp(p.log_ls);
  const double noise = std::exp(p.log_noise);
  const Matrix k = kernel_matrix(x, amp2, ls * ls, noise);
  const Matrix l = cholesky_with_jitter(k, nullptr);
  const std::vector<double> alpha = cholesky_solve(l, y);

  double lml = 0.0;
  for (std::size_t i = 0; i < n; ++i) lml -= std::log(l(i, i));
  double fit = 0.0;
  for (std::size_t i = 0; i < n; ++i) fit += y[i] * alpha[i];
  lml -= 0.5 * fit + 0.5 * static_cast<double>(n) * kLog2Pi;

  if (grad) {
    // K^{-1} from the factor, column by column.
    Matrix kinv(n, n);
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = 1.0;
      const auto col = cholesky_solve(l, e);
      for (std::size_t i = 0; i < n; ++i) kinv(i, j) = col[i];
      e[j] = 0.0;
    }
    // dL/dtheta = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta)
    double g_amp = 0.0, g_ls = 0.0, g_noise = 0.0;
    const double ls2 = ls * ls;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double a = alpha[i] * alpha[j] - kinv(i, j);
        const double r2 = sqdist(x.row(i), x.row(j));
        const double kse = amp2 * std::exp(-0.5 * r2 / ls2);
        g_amp += 0.5 * a * kse;                 // dK/dlog amp2 = K_se
        g_ls += 0.5 * a * kse * (r2 / ls2);     // dK/dlog ls = K_se r2/ls^2
        if (i == j) g_noise += 0.5 * a * noise; // dK/dlog noise = noise I
      }
    }
    grad->log_amp2 = g_amp;
    grad->log_ls = g_ls;
    grad->log_noise = g_noise;
  }
  return lml;
}

}  // namespace

GaussianPrediction GpRegressor::predict(std::span<const double> x) const {
  const std::size_t n = inputs_.rows;
  const double amp2 = amplitude_ * amplitude_;
  const double ls2 = lengthscale_ * lengthscale_;
  std::vector<double> kstar(n);
  for (std::size_t i = 0; i < n; ++i) {
    kstar[i] = amp2 * std::exp(-0.5 * sqdist(inputs_.row(i), x) / ls2);
  }
  GaussianPrediction pred;
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m += kstar[i] * alpha_[i];
  pred.mean = m + label_mean_;
  const std::vector<double> v = solve_lower(chol_, kstar);
  double vsq = 0.0;
  for (double vi : v) vsq += vi * vi;
  pred.epistemic_variance = std::max(0.0, amp2 - vsq);
  pred.aleatoric_variance = noise_variance_;
  return pred;
}

GpRegressor train_gp(const TabularDataset& train, const GpConfig& config) {
  if (train.size() < 2) throw std::invalid_argument("train_gp: need at least 2 rows");

  Rng rng(config.seed);
  GpRegressor gp;

  // Subsample above the cap, deterministically.
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (train.size() > static_cast<std::size_t>(config.max_train)) {
    shuffle(idx, rng);
    idx.resize(config.max_train);
    std::sort(idx.begin(), idx.end());
  }
  const TabularDataset sub = select_rows(train, idx);

  gp.label_mean_ = mean(sub.labels);
  std::vector<double> y(sub.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sub.labels[i] - gp.label_mean_;

  const double label_var = std::max(sample_variance(sub.labels), 1e-10);
  double amp = config.amplitude > 0.0 ? config.amplitude : std::sqrt(label_var);
  double ls = config.lengthscale > 0.0 ? config.lengthscale
                                       : median_pairwise_distance(sub.features, rng);
  double noise = config.noise_variance > 0.0 ? config.noise_variance : 0.05 * label_var;

  if (config.optimize) {
    // Hyperparameter search on a capped subset keeps each iteration O(m^3).
    std::vector<std::size_t> oidx(sub.size());
    for (std::size_t i = 0; i < oidx.size(); ++i) oidx[i] = i;
    if (sub.size() > static_cast<std::size_t>(config.optimize_subsample)) {
      shuffle(oidx, rng);
      oidx.resize(config.optimize_subsample);
      std::sort(oidx.begin(), oidx.end());
    }
    const TabularDataset osub = select_rows(sub, oidx);
    std::vector<double> oy(osub.size());
    double omean = mean(osub.labels);
    for (std::size_t i = 0; i < oy.size(); ++i) oy[i] = osub.labels[i] - omean;

    LogParams p{std::log(amp * amp), std::log(ls), std::log(noise)};
    LogParams m{0, 0, 0}, v{0, 0, 0};
    for (int t = 1; t <= config.optimize_iters; ++t) {
      LogParams g{0, 0, 0};
      marginal_and_grad(osub.features, oy, p, &g);
      const double bc1 = 1.0 - std::pow(0.9, t);
      const double bc2 = 1.0 - std::pow(0.999, t);
      auto step = [&](double& param, double& ms, double& vs, double grad) {
        ms = 0.9 * ms + 0.1 * grad;
        vs = 0.999 * vs + 0.001 * grad * grad;
        // Ascent on the log marginal likelihood.
        param += config.optimize_lr * (ms / bc1) / (std::sqrt(vs / bc2) + 1e-8);
      };
      step(p.log_amp2, m.log_amp2, v.log_amp2, g.log_amp2);
      step(p.log_ls, m.log_ls, v.log_ls, g.log_ls);
      step(p.log_noise, m.log_noise, v.log_noise, g.log_noise);
      // Keep the noise floor sane; degenerate zero-noise kernels go singular.
      p.log_noise = std::max(p.log_noise, std::log(1e-8 * label_var));
    }
    amp = std::sqrt(std::exp(p.log_amp2));
    ls = std::exp(p.log_ls);
    noise = std::exp(p.log_noise);
  }

  gp.amplitude_ = amp;
  gp.lengthscale_ = ls;
  gp.noise_variance_ = noise;
  gp.inputs_ = sub.features;

  const Matrix k = kernel_matrix(sub.features, amp * amp, ls * ls, noise);
  double jitter = 0.0;
  gp.chol_ = cholesky_with_jitter(k, &jitter);
  gp.alpha_ = cholesky_solve(gp.chol_, y);

  double lml = 0.0;
  for (std::size_t i = 0; i < sub.size(); ++i) lml -= std::log(gp.chol_(i, i));
  double fit = 0.0;
  for (std::size_t i = 0; i < sub.size(); ++i) fit += y[i] * gp.alpha_[i];
  gp.log_marginal_ = lml - 0.5 * fit - 0.5 * static_cast<double>(sub.size()) * kLog2Pi;
  return gp;
}

}  // namespace uqcov
