#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uqcov/intervals.hpp"
#include "uqcov/numerics.hpp"

namespace uqcov {

/// One evaluated (method, dataset, shift condition) cell.
struct CoverageReport {
  std::string method;
  std::string dataset;
  std::string shift = "none";
  int severity = 0;
  double alpha = 0.05;
  double coverage = 0.0;
  double width = 0.0;              // stddev units (regression) or set size (classification)
  std::optional<double> brier;
  std::optional<double> ece;
  std::optional<double> accuracy;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
};

/// Fraction of labels inside their (closed) interval.
double coverage_intervals(const std::vector<PredictionInterval>& intervals,
                          std::span<const double> y);

/// Mean interval width in units of the training-label standard deviation.
double width_regression(const std::vector<PredictionInterval>& intervals, double s_y);

double coverage_sets(const std::vector<PredictionSet>& sets, std::span<const int> labels);
double width_sets(const std::vector<PredictionSet>& sets);

/// Multiclass Brier score: mean squared Euclidean distance between the
/// probability row and the one-hot label (no 1/K scaling).
double brier(const Matrix& probs, std::span<const int> labels);

/// Expected calibration error over equal-width confidence bins; empty bins
/// contribute nothing.
double ece(const Matrix& probs, std::span<const int> labels, int bins = 15);

double accuracy(const Matrix& probs, std::span<const int> labels);

/// (width, coverage) point tagged by method, the unit of the relative-
/// strength analysis at a fixed corruption level.
struct MethodPoint {
  std::string method;
  double width = 0.0;
  double coverage = 0.0;
};

/// Pool all methods' points at one level, fit coverage ~ width by OLS, and
/// return per method the fraction of its points strictly above the line.
std::map<std::string, double> fraction_above_line(const std::vector<MethodPoint>& points);

enum class RankDirection { higher_better, lower_better };

/// Rank 1 = best; ties share the average of the covered ranks.
std::map<std::string, double> method_ranks(const std::map<std::string, double>& scores,
                                           RankDirection direction);

/// Serialize reports as CSV (fixed column order: method, dataset, shift,
/// severity, alpha, coverage, width, brier, ece, accuracy, n, seed, status).
/// A `# config_hash=...` comment line leads the file when a hash is given.
std::string reports_to_csv(const std::vector<CoverageReport>& reports,
                           const std::string& config_hash = "");
std::vector<CoverageReport> reports_from_csv(const std::string& text);
std::string reports_to_json(const std::vector<CoverageReport>& reports);

}  // namespace uqcov
