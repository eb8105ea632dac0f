#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "uqcov/numerics.hpp"
#include "uqcov/rng.hpp"

using namespace uqcov;

namespace {

// ---- independent oracles, deliberately on different algorithmic routes ----

// Error-function by Taylor series (converges fast for |x| < 4).
double erf_series(double x) {
  const double pi = 3.14159265358979323846;
  double term = x;
  double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    sum += term / (2 * n + 1);
    if (std::fabs(term) < 1e-18) break;
  }
  return 2.0 / std::sqrt(pi) * sum;
}

double normal_cdf_series(double z) { return 0.5 * (1.0 + erf_series(z / std::sqrt(2.0))); }

double normal_quantile_bisect(double p) {
  double lo = -8.0, hi = 8.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf_series(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double t_density(double t, double df) {
  const double pi = 3.14159265358979323846;
  return std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2) -
                  0.5 * std::log(df * pi) - (df + 1) / 2 * std::log1p(t * t / df));
}

double simpson(double (*f)(double, double), double df, double a, double b, int n) {
  // n even panels
  const double h = (b - a) / n;
  double acc = f(a, df) + f(b, df);
  for (int i = 1; i < n; ++i) acc += f(a + i * h, df) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double t_cdf_quadrature(double t, double df) {
  if (t < 0) return 1.0 - t_cdf_quadrature(-t, df);
  return 0.5 + simpson(t_density, df, 0.0, t, 4000);
}

// Householder QR least squares, independent of the normal-equations path.
std::vector<double> qr_solve(Matrix a, std::vector<double> y) {
  const std::size_t m = a.rows, n = a.cols;
  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (a(k, k) > 0) norm = -norm;
    std::vector<double> v(m, 0.0);
    for (std::size_t i = k; i < m; ++i) v[i] = a(i, k);
    v[k] -= norm;
    double vtv = 0.0;
    for (std::size_t i = k; i < m; ++i) vtv += v[i] * v[i];
    if (vtv < 1e-300) continue;
    for (std::size_t j = k; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i] * a(i, j);
      const double f = 2.0 * dot / vtv;
      for (std::size_t i = k; i < m; ++i) a(i, j) -= f * v[i];
    }
    double doty = 0.0;
    for (std::size_t i = k; i < m; ++i) doty += v[i] * y[i];
    const double f = 2.0 * doty / vtv;
    for (std::size_t i = k; i < m; ++i) y[i] -= f * v[i];
  }
  std::vector<double> beta(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * beta[j];
    beta[ii] = s / a(ii, ii);
  }
  return beta;
}

}  // namespace

TEST_CASE("quantile: single sample and endpoints") {
  CHECK(quantile(std::vector<double>{5.0}, 0.5) == 5.0);
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i + 1;
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 100.0);
}

TEST_CASE("quantile: interpolation convention on 1..100") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i + 1;
  // h = 0.975 * 99 = 96.525; s[96] = 97, s[97] = 98 -> 97.525
  CHECK(quantile(v, 0.975) == doctest::Approx(97.525).epsilon(1e-12));
  // h = 0.025 * 99 = 2.475; s[2] = 3, s[3] = 4 -> 3.475
  CHECK(quantile(v, 0.025) == doctest::Approx(3.475).epsilon(1e-12));
}

TEST_CASE("quantile: monotone in q and bounded by extremes") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(1 + rng.uniform_index(40));
    for (auto& x : v) x = rng.normal(0, 3);
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = *std::max_element(v.begin(), v.end());
    double prev = lo;
    for (double q = 0.0; q <= 1.0001; q += 0.05) {
      const double qq = std::min(q, 1.0);
      const double val = quantile(v, qq);
      CHECK(val >= prev - 1e-12);
      CHECK(val >= lo);
      CHECK(val <= hi);
      prev = val;
    }
  }
}

TEST_CASE("quantile: errors") {
  CHECK_THROWS_AS(quantile(std::vector<double>{}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(quantile(std::vector<double>{1.0}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(quantile(std::vector<double>{1.0}, 1.1), std::invalid_argument);
}

TEST_CASE("normal_quantile: symmetry and known points") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  // Oracle: bisection on a series-expansion normal CDF.
  const double z975 = normal_quantile_bisect(0.975);
  CHECK(std::fabs(normal_quantile(0.975) - z975) < 1e-9);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(normal_quantile(0.025) == doctest::Approx(-normal_quantile(0.975)).epsilon(1e-9));
  for (double p : {0.001, 0.01, 0.1, 0.3, 0.7, 0.9, 0.99, 0.999}) {
    CHECK(std::fabs(normal_quantile(p) + normal_quantile(1.0 - p)) < 1e-9);
    CHECK(std::fabs(normal_cdf(normal_quantile(p)) - p) < 1e-9);
  }
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("t_quantile: symmetry, normal limit, quadrature oracle") {
  CHECK(t_quantile(0.5, 3) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t_quantile(0.975, 1000000) == doctest::Approx(1.959964).epsilon(1e-5));

  const double t10 = t_quantile(0.975, 10);
  // Simpson quadrature of the density as an independent CDF.
  CHECK(std::fabs(t_cdf_quadrature(t10, 10.0) - 0.975) < 1e-8);
  // Independent bisection against the quadrature CDF.
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (t_cdf_quadrature(mid, 10.0) < 0.975 ? lo : hi) = mid;
  }
  CHECK(t10 == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-7));

  for (unsigned df : {1u, 2u, 5u, 30u}) {
    for (double p : {0.6, 0.9, 0.975}) {
      CHECK(std::fabs(t_cdf(t_quantile(p, df), df) - p) < 1e-8);
      CHECK(t_quantile(1.0 - p, df) == doctest::Approx(-t_quantile(p, df)).epsilon(1e-7));
    }
  }
  CHECK_THROWS_AS(t_quantile(0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(t_quantile(0.975, 0), std::invalid_argument);
}

TEST_CASE("cholesky: identity and hand-checkable 2x2") {
  Matrix eye(3, 3);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  const Matrix l = cholesky(eye);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(l(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
  }
  Matrix a(2, 2);
  a(0, 0) = 4;
  a(0, 1) = 2;
  a(1, 0) = 2;
  a(1, 1) = 5;
  const Matrix l2 = cholesky(a);
  CHECK(l2(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(l2(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(l2(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(l2(0, 1) == 0.0);
}

TEST_CASE("cholesky: SPD reconstruction property") {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 10;
    Matrix b(n, n);
    for (auto& v : b.data) v = rng.normal(0, 1);
    Matrix a(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = (i == j) ? 1.0 : 0.0;  // B^T B + I
        for (std::size_t k = 0; k < n; ++k) s += b(k, i) * b(k, j);
        a(i, j) = s;
      }
    }
    const Matrix l = cholesky(a);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += l(i, k) * l(j, k);
        CHECK(std::fabs(s - a(i, j)) < 1e-8);
      }
    }
  }
}

TEST_CASE("cholesky: failures carry the pivot; asymmetric rejected") {
  Matrix bad(2, 2);
  bad(0, 0) = 1;
  bad(0, 1) = 2;
  bad(1, 0) = 2;
  bad(1, 1) = 1;  // det < 0
  try {
    cholesky(bad);
    FAIL("expected CholeskyError");
  } catch (const CholeskyError& e) {
    CHECK(e.pivot() == 1);
  }
  Matrix asym(2, 2);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(cholesky(asym), std::invalid_argument);
}

TEST_CASE("ols_fit: exact lines, constants, and QR oracle") {
  // y exactly linear: y = 3 + 2x
  Matrix x(5, 2);
  std::vector<double> y(5);
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = i;
    y[i] = 3.0 + 2.0 * i;
  }
  auto beta = ols_fit(x, y);
  CHECK(beta[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(beta[1] == doctest::Approx(2.0).epsilon(1e-8));

  // constant labels -> zero slope, intercept = mean
  std::fill(y.begin(), y.end(), 7.5);
  beta = ols_fit(x, y);
  CHECK(beta[0] == doctest::Approx(7.5).epsilon(1e-8));
  CHECK(beta[1] == doctest::Approx(0.0).epsilon(1e-8));

  // 20-point noisy line vs Householder QR
  Rng rng(5);
  Matrix x2(20, 2);
  std::vector<double> y2(20);
  for (int i = 0; i < 20; ++i) {
    x2(i, 0) = 1.0;
    x2(i, 1) = rng.normal(0, 2);
    y2[i] = 1.2 - 0.7 * x2(i, 1) + rng.normal(0, 0.3);
  }
  const auto ols = ols_fit(x2, y2);
  const auto qr = qr_solve(x2, y2);
  CHECK(std::fabs(ols[0] - qr[0]) < 1e-6);
  CHECK(std::fabs(ols[1] - qr[1]) < 1e-6);

  // rank-deficient: duplicated column
  Matrix xr(4, 2);
  for (int i = 0; i < 4; ++i) {
    xr(i, 0) = i;
    xr(i, 1) = i;
  }
  std::vector<double> yr{0, 1, 2, 3};
  CHECK_THROWS_AS(ols_fit(xr, yr), std::runtime_error);
}

TEST_CASE("pearson: trivial and hand-computed values") {
  std::vector<double> xs{1, 2, 3, 5, 8};
  std::vector<double> neg;
  for (double v : xs) neg.push_back(-v);
  CHECK(pearson(xs, xs) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(xs, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  // cov terms: 3; Sxx = 2; Syy = 14/3 -> r = 3*sqrt(3)/(2*sqrt(7))
  std::vector<double> a{1, 2, 3}, b{1, 2, 4};
  CHECK(pearson(a, b) == doctest::Approx(0.9819805060619657).epsilon(1e-12));
}

TEST_CASE("pearson: affine invariance and zero-variance error") {
  Rng rng(13);
  std::vector<double> xs(30), ys(30);
  for (int i = 0; i < 30; ++i) {
    xs[i] = rng.normal(0, 1);
    ys[i] = 0.5 * xs[i] + rng.normal(0, 1);
  }
  const double r = pearson(xs, ys);
  std::vector<double> xs2;
  for (double v : xs) xs2.push_back(3.5 * v - 11.0);
  CHECK(std::fabs(pearson(xs2, ys) - r) < 1e-10);

  std::vector<double> flat(30, 2.0);
  CHECK_THROWS_AS(pearson(flat, ys), std::invalid_argument);
  std::vector<double> short1{1.0};
  CHECK_THROWS_AS(pearson(short1, short1), std::invalid_argument);
}
