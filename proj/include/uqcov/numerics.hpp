#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqcov {

/// Ordered sequence of real samples (e.g. Monte-Carlo predictions for one query point).
using SampleVector = std::vector<double>;

/// Dense row-major matrix. Small and boring on purpose: design matrices,
/// kernel matrices and probability tables at desk scale.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

/// Cholesky failure: carries the pivot index whose diagonal went non-positive.
/// Jitter policy belongs to the caller (the GP module owns it).
class CholeskyError : public std::runtime_error {
 public:
  CholeskyError(std::size_t pivot, const std::string& what)
      : std::runtime_error(what), pivot_(pivot) {}
  std::size_t pivot() const { return pivot_; }

 private:
  std::size_t pivot_;
};

double mean(std::span<const double> xs);
/// Sample variance with the n-1 denominator.
double sample_variance(std::span<const double> xs);
double sample_stddev(std::span<const double> xs);

/// Empirical quantile, linear interpolation convention:
/// sort ascending, h = q*(n-1), interpolate between floor(h) and ceil(h).
double quantile(std::span<const double> samples, double q);
/// Same convention on an already ascending-sorted sequence.
double quantile_sorted(std::span<const double> sorted, double q);

double normal_cdf(double z);
double normal_pdf(double z);
/// Inverse standard normal CDF; |Phi(z) - p| <= 1e-9 guaranteed (bisection + Newton).
double normal_quantile(double p);

/// Student-t CDF with df >= 1 degrees of freedom.
double t_cdf(double t, unsigned df);
/// Inverse Student-t CDF; |F(t) - p| <= 1e-8.
double t_quantile(double p, unsigned df);

/// Lower-triangular L with L*L^T = a. Requires a square and symmetric
/// within 1e-10 (relative to the largest entry). Throws CholeskyError with
/// the failing pivot when a is not positive definite.
Matrix cholesky(const Matrix& a);

/// Solve L*x = b for lower-triangular L.
std::vector<double> solve_lower(const Matrix& l, std::span<const double> b);
/// Solve L^T*x = b for lower-triangular L.
std::vector<double> solve_lower_transposed(const Matrix& l, std::span<const double> b);
/// Solve (L*L^T)*x = b.
std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b);

/// OLS coefficients via normal equations + Cholesky. The caller supplies any
/// intercept column explicitly. Throws on rank-deficient designs.
std::vector<double> ols_fit(const Matrix& x, std::span<const double> y);

/// Pearson product-moment correlation; both inputs need nonzero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace uqcov
