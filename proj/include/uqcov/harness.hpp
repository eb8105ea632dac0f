#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "uqcov/classifier.hpp"
#include "uqcov/metrics.hpp"
#include "uqcov/models.hpp"
#include "uqcov/shift.hpp"

namespace uqcov {

/// Bad or unknown configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything the experiment commands need, populated from the config file
/// (flat `key = value` lines under [sections]; unknown keys are an error)
/// plus CLI overrides. `canonical` is the hashable description of the run.
struct HarnessConfig {
  // global
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
  std::string canonical;

  // [regress]
  std::vector<std::string> regress_datasets;
  std::string target_column = "-1";  // integer (negative = from end) or header name
  std::vector<std::string> regress_methods;
  int split_seeds = 20;
  double train_fraction = 0.72;
  double val_fraction = 0.18;
  double test_fraction = 0.10;
  int search_trials = 100;
  int ensemble_size = 40;
  int dropout_passes = 200;
  int svi_mc_samples = 100;
  bool gp_optimize = true;
  int gp_max_train = 2000;
  int gp_opt_subsample = 512;
  bool save_models = false;
  SearchSpace search_space;

  // [mnist_shift]
  std::string train_images, train_labels_path, test_images, test_labels_path;
  std::vector<std::string> variants;
  std::vector<double> rotations;  // empty -> 15..180 step 15
  int roll_step = 2;
  bool include_rolls = true;
  int eval_limit = 0;  // 0 = full test set
  double classifier_val_fraction = 0.1;
  int classifier_epochs = 5;
  double classifier_lr = 1e-3;
  int classifier_batch = 64;
  double classifier_dropout = 0.1;
  int classifier_mc_passes = 200;
  int classifier_ensemble_members = 5;

  // [corruptions]
  CorruptionTables corruptions;

  // [setcov]
  std::vector<std::string> probfiles;
  bool probfiles_are_logits = false;

  // [analyze] / [report]
  std::vector<std::string> analyze_reports;
  std::vector<std::string> report_inputs;
};

HarnessConfig parse_config_file(const std::string& path);
HarnessConfig parse_config_text(const std::string& text);
/// FNV-1a hash (hex) of the canonical run description.
std::string config_hash(const HarnessConfig& config);

struct RunResult {
  std::vector<CoverageReport> reports;
  bool any_failed = false;
};

/// Regression benchmark: dataset x split seed x method cells; per-method
/// random search on train/val, final model on train, intervals on test.
/// Failed cells become status=failed rows, the sweep continues.
RunResult cmd_regress(const HarnessConfig& config);

/// Classifier shift study: train each variant once on clean data, evaluate
/// prediction sets on the clean test set, the rotation sweep and the roll
/// sweep, and emit per-method width/shift-distance correlations.
RunResult cmd_mnist_shift(const HarnessConfig& config);

/// Set-coverage metrics over externally supplied probability files.
RunResult cmd_setcov(const HarnessConfig& config);

struct LevelAnalysis {
  int severity = 0;
  double intercept = 0.0;
  double slope = 0.0;
  std::map<std::string, double> fraction_above;
  std::map<std::string, double> coverage_rank;
  std::map<std::string, double> brier_rank;
  std::map<std::string, double> ece_rank;
};

struct AnalysisResult {
  std::vector<LevelAnalysis> levels;
};

/// Per severity level: pooled coverage~width regression, per-method fraction
/// above the line, and rank tables for coverage/Brier/ECE.
AnalysisResult cmd_analyze(const HarnessConfig& config);

/// Deterministic SVG renderings of report files (coverage vs width per
/// severity, coverage/width vs shift level, 0.95 reference line).
std::vector<std::string> cmd_report(const HarnessConfig& config);

/// Pearson correlation of set width against roll shift distance
/// d(s) = min(s, width - s) over the roll sweep; clean rows count as s = 0.
std::map<std::string, double> width_shift_correlations(
    const std::vector<CoverageReport>& reports, int image_width);

/// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace uqcov
