#include "uqcov/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uqcov {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Regularized incomplete beta I_x(a,b) via the continued fraction
// (modified Lentz), with the symmetry flip for convergence.
double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double t_pdf(double t, unsigned df) {
  const double v = static_cast<double>(df);
  const double ln = std::lgamma((v + 1.0) / 2.0) - std::lgamma(v / 2.0) -
                    0.5 * std::log(v * kPi) -
                    (v + 1.0) / 2.0 * std::log1p(t * t / v);
  return std::exp(ln);
}

}  // namespace

double mean(std::span<const double> xs) {
  require(!xs.empty(), "mean: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  require(xs.size() >= 2, "sample_variance: need at least 2 samples");
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double sample_stddev(std::span<const double> xs) {
  return std::sqrt(sample_variance(xs));
}

double quantile_sorted(std::span<const double> sorted, double q) {
  require(!sorted.empty(), "quantile: empty samples");
  require(q >= 0.0 && q <= 1.0, "quantile: q outside [0,1]");
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::span<const double> samples, double q) {
  require(!samples.empty(), "quantile: empty samples");
  require(q >= 0.0 && q <= 1.0, "quantile: q outside [0,1]");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, q);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p outside (0,1)");
  // Bisection down to a short bracket, then Newton.
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-3) break;
  }
  double z = 0.5 * (lo + hi);
  for (int i = 0; i < 50; ++i) {
    const double err = normal_cdf(z) - p;
    if (std::fabs(err) < 1e-13) break;
    const double d = normal_pdf(z);
    if (d <= 0.0) break;
    z -= err / d;
  }
  return z;
}

double t_cdf(double t, unsigned df) {
  require(df >= 1, "t_cdf: df must be >= 1");
  if (t == 0.0) return 0.5;
  const double v = static_cast<double>(df);
  const double x = v / (v + t * t);
  const double tail = 0.5 * incomplete_beta(v / 2.0, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, unsigned df) {
  require(p > 0.0 && p < 1.0, "t_quantile: p outside (0,1)");
  require(df >= 1, "t_quantile: df must be >= 1");
  if (p == 0.5) return 0.0;
  // Bracket generously: t tails are heavy for small df.
  double lo = -1e8, hi = 1e8;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (t_cdf(mid, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-3) break;
  }
  double t = 0.5 * (lo + hi);
  for (int i = 0; i < 60; ++i) {
    const double err = t_cdf(t, df) - p;
    if (std::fabs(err) < 1e-12) break;
    const double d = t_pdf(t, df);
    if (d <= 0.0) break;
    t -= err / d;
  }
  return t;
}

Matrix cholesky(const Matrix& a) {
  require(a.rows == a.cols && a.rows > 0, "cholesky: matrix must be square");
  const std::size_t n = a.rows;
  double max_abs = 1.0;
  for (double v : a.data) max_abs = std::max(max_abs, std::fabs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::fabs(a(i, j) - a(j, i)) > 1e-10 * max_abs) {
        throw std::invalid_argument("cholesky: matrix not symmetric");
      }
    }
  }
  Matrix l(n, n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw CholeskyError(j, "cholesky: non-positive pivot at index " +
                                 std::to_string(j));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      const double* li = l.data.data() + i * n;
      const double* lj = l.data.data() + j * n;
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      l(i, j) = s / ljj;
    }
  }
  return l;
}

std::vector<double> solve_lower(const Matrix& l, std::span<const double> b) {
  require(l.rows == l.cols && l.rows == b.size(), "solve_lower: size mismatch");
  const std::size_t n = l.rows;
  std::vector<double> x(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    const double* li = l.data.data() + i * n;
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * x[k];
    x[i] = s / li[i];
  }
  return x;
}

std::vector<double> solve_lower_transposed(const Matrix& l,
                                           std::span<const double> b) {
  require(l.rows == l.cols && l.rows == b.size(),
          "solve_lower_transposed: size mismatch");
  const std::size_t n = l.rows;
  std::vector<double> x(b.begin(), b.end());
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
  return solve_lower_transposed(l, solve_lower(l, b));
}

std::vector<double> ols_fit(const Matrix& x, std::span<const double> y) {
  require(x.rows == y.size(), "ols_fit: row count does not match labels");
  require(x.rows >= x.cols && x.cols > 0, "ols_fit: need rows >= cols");
  const std::size_t n = x.rows, p = x.cols;
  Matrix xtx(p, p, 0.0);
  std::vector<double> xty(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.data.data() + i * p;
    for (std::size_t a = 0; a < p; ++a) {
      xty[a] += xi[a] * y[i];
      for (std::size_t b = a; b < p; ++b) xtx(a, b) += xi[a] * xi[b];
    }
  }
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < a; ++b) xtx(a, b) = xtx(b, a);
  }
  try {
    const Matrix l = cholesky(xtx);
    // A pivot at float-noise scale means a (numerically) rank-deficient
    // design even though the factorization squeaked through.
    for (std::size_t j = 0; j < p; ++j) {
      if (l(j, j) * l(j, j) <= 1e-12 * xtx(j, j)) {
        throw std::runtime_error("ols_fit: rank-deficient design matrix");
      }
    }
    return cholesky_solve(l, xty);
  } catch (const CholeskyError&) {
    throw std::runtime_error("ols_fit: rank-deficient design matrix");
  }
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "pearson: length mismatch");
  require(xs.size() >= 2, "pearson: need at least 2 samples");
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw std::invalid_argument("pearson: zero variance input");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace uqcov
