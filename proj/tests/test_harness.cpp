#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/synth.hpp"
#include "uqcov/checkpoint.hpp"
#include "uqcov/harness.hpp"
#include "uqcov/probfile.hpp"
#include "uqcov/svgplot.hpp"

using namespace uqcov;

namespace {

std::string fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "uqcov_test_harness" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("config: sections parse, unknown keys rejected, hash stable") {
  const std::string text =
      "alpha = 0.1\n"
      "seed = 5\n"
      "[regress]\n"
      "methods = linreg;gp\n"
      "split_seeds = 3\n"
      "search_epochs = 10;20\n"
      "[corruptions]\n"
      "brightness = 0.1;0.2;0.3;0.4;0.5\n";
  const HarnessConfig c = parse_config_text(text);
  CHECK(c.alpha == 0.1);
  CHECK(c.seed == 5);
  CHECK(c.regress_methods == std::vector<std::string>{"linreg", "gp"});
  CHECK(c.split_seeds == 3);
  CHECK(c.search_space.epochs_min == 10);
  CHECK(c.search_space.epochs_max == 20);

  CHECK(config_hash(c) == config_hash(parse_config_text(text)));
  const HarnessConfig other = parse_config_text(
      "alpha = 0.1\nseed = 6\n[regress]\nmethods = linreg;gp\n");
  CHECK(config_hash(c) != config_hash(other));

  CHECK_THROWS_AS(parse_config_text("nonsense_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[regress]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[made_up]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("alpha = banana\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("alpha = 2.0\n"), ConfigError);
}

TEST_CASE("cmd_setcov: one-hot, uniform, and a hand-computed 4-row file") {
  const std::string dir = fresh_dir("setcov");

  write_file(dir + "/onehot.csv",
             "# method=perfect dataset=d shift=none severity=0\n"
             "p0,p1,p2,label\n"
             "1,0,0,0\n"
             "0,1,0,1\n");
  write_file(dir + "/uniform.csv",
             "# method=flat dataset=d shift=none severity=0\n"
             "p0,p1,p2,p3,p4,p5,p6,p7,p8,p9,label\n"
             "0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,3\n");
  // 4 rows, K=2: sets at alpha=0.05 are {argmax} when p >= .95 else both.
  write_file(dir + "/hand.csv",
             "# method=hand dataset=d shift=roll_4 severity=0\n"
             "p0,p1,label\n"
             "0.96,0.04,0\n"   // set {0}, covered
             "0.96,0.04,1\n"   // set {0}, missed
             "0.70,0.30,0\n"   // set {0,1}, covered
             "0.20,0.80,1\n");  // set {0,1}, covered

  HarnessConfig cfg = parse_config_text("");
  cfg.out_dir = dir + "/out";
  cfg.probfiles = {dir + "/onehot.csv", dir + "/uniform.csv", dir + "/hand.csv"};
  const RunResult result = cmd_setcov(cfg);
  REQUIRE(result.reports.size() == 3);

  const CoverageReport& perfect = result.reports[0];
  CHECK(perfect.method == "perfect");
  CHECK(perfect.coverage == 1.0);
  CHECK(perfect.width == 1.0);
  CHECK(*perfect.brier == 0.0);
  CHECK(*perfect.ece == doctest::Approx(0.0));
  CHECK(*perfect.accuracy == 1.0);

  const CoverageReport& flat = result.reports[1];
  CHECK(flat.coverage == 1.0);
  CHECK(flat.width == 10.0);

  const CoverageReport& hand = result.reports[2];
  CHECK(hand.shift == "roll_4");
  CHECK(hand.coverage == doctest::Approx(0.75));
  CHECK(hand.width == doctest::Approx(1.5));
  // brier by hand: row squared distances 0.0032, 1.8432, 0.18, 0.08
  CHECK(*hand.brier == doctest::Approx((0.0032 + 1.8432 + 0.18 + 0.08) / 4.0).epsilon(1e-12));
  CHECK(*hand.accuracy == doctest::Approx(0.75));

  CHECK(std::filesystem::exists(dir + "/out/setcov_reports.csv"));
  CHECK(std::filesystem::exists(dir + "/out/setcov_reports.json"));
}

TEST_CASE("cmd_analyze: dominance fractions, rank tables, error paths") {
  const std::string dir = fresh_dir("analyze");

  // Synthetic reports: method A sits 0.02 above, B 0.02 below a known line.
  std::vector<CoverageReport> rows;
  for (int sev = 1; sev <= 2; ++sev) {
    for (int i = 0; i < 6; ++i) {
      const double w = 1.0 + 0.5 * i;
      CoverageReport a;
      a.method = "A";
      a.dataset = "synth";
      a.shift = "gaussian_noise";
      a.severity = sev;
      a.width = w;
      a.coverage = 0.4 + 0.1 * w + 0.02;
      a.brier = 0.2 - 0.01 * sev;
      a.ece = 0.05 * sev;
      a.n = 100;
      rows.push_back(a);
      CoverageReport b = a;
      b.method = "B";
      b.coverage = 0.4 + 0.1 * w - 0.02;
      b.brier = 0.3;
      b.ece = 0.01;
      rows.push_back(b);
    }
  }
  write_file(dir + "/reports.csv", reports_to_csv(rows, "cafe"));

  HarnessConfig cfg = parse_config_text("");
  cfg.out_dir = dir + "/out";
  cfg.analyze_reports = {dir + "/reports.csv"};
  const AnalysisResult result = cmd_analyze(cfg);
  REQUIRE(result.levels.size() == 2);
  for (const auto& level : result.levels) {
    CHECK(level.fraction_above.at("A") == 1.0);
    CHECK(level.fraction_above.at("B") == 0.0);
    CHECK(level.coverage_rank.at("A") == 1.0);
    CHECK(level.coverage_rank.at("B") == 2.0);
    CHECK(level.brier_rank.at("A") == 1.0);  // lower better
    CHECK(level.ece_rank.at("B") == 1.0);
  }
  CHECK(std::filesystem::exists(dir + "/out/analysis_fractions.csv"));
  CHECK(std::filesystem::exists(dir + "/out/analysis_ranks.csv"));
  CHECK(std::filesystem::exists(dir + "/out/analysis.json"));

  // average-tie rule surfaces through the rank table
  std::vector<CoverageReport> tied;
  for (const char* m : {"x", "y", "z"}) {
    CoverageReport r;
    r.method = m;
    r.dataset = "synth";
    r.severity = 1;
    r.width = m[0] - 'w';  // 1, 2, 3
    r.coverage = (std::string(m) == "z") ? 0.5 : 0.8;
    r.n = 10;
    tied.push_back(r);
  }
  write_file(dir + "/tied.csv", reports_to_csv(tied, ""));
  cfg.analyze_reports = {dir + "/tied.csv"};
  const AnalysisResult tie_result = cmd_analyze(cfg);
  CHECK(tie_result.levels[0].coverage_rank.at("x") == 1.5);
  CHECK(tie_result.levels[0].coverage_rank.at("y") == 1.5);
  CHECK(tie_result.levels[0].coverage_rank.at("z") == 3.0);

  // single-method input is an error
  std::vector<CoverageReport> solo(rows.begin(), rows.begin() + 1);
  write_file(dir + "/solo.csv", reports_to_csv(solo, ""));
  cfg.analyze_reports = {dir + "/solo.csv"};
  CHECK_THROWS_AS(cmd_analyze(cfg), std::invalid_argument);
}

TEST_CASE("svgplot: empty plot is valid, identical inputs byte-identical") {
  SvgPlot empty;
  empty.title = "nothing";
  const std::string a = empty.render();
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("</svg>") != std::string::npos);
  CHECK(a.find("<line") != std::string::npos);  // axes present
  CHECK(empty.render() == a);

  SvgPlot plot;
  SvgSeries s;
  s.label = "m";
  s.points = {{0.0, 0.1}, {1.0, 0.5}, {2.0, 0.9}};
  plot.series.push_back(s);
  CHECK(plot.render() == plot.render());
}

TEST_CASE("svgplot: marker coordinates are affine in the data") {
  SvgPlot plot;
  SvgSeries s;
  s.label = "m";
  s.points = {{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};  // equally spaced
  plot.series.push_back(s);
  const std::string svg = plot.render();

  std::vector<double> cx, cy;
  std::size_t pos = 0;
  while ((pos = svg.find("<circle cx=\"", pos)) != std::string::npos) {
    pos += 12;
    cx.push_back(std::stod(svg.substr(pos)));
    const auto cypos = svg.find("cy=\"", pos) + 4;
    cy.push_back(std::stod(svg.substr(cypos)));
  }
  REQUIRE(cx.size() == 3);
  // affine map: equal data spacing -> equal pixel spacing (within 0.02 rounding)
  CHECK(std::fabs((cx[1] - cx[0]) - (cx[2] - cx[1])) < 0.02);
  CHECK(std::fabs((cy[1] - cy[0]) - (cy[2] - cy[1])) < 0.02);
  CHECK(cx[0] < cx[1]);
  CHECK(cy[0] > cy[1]);  // larger y is higher, so smaller pixel row
}

TEST_CASE("cmd_report: emits deterministic SVGs for shift sweeps") {
  const std::string dir = fresh_dir("report");
  std::vector<CoverageReport> rows;
  for (const char* m : {"svi", "vanilla"}) {
    for (int lvl = 0; lvl <= 3; ++lvl) {
      CoverageReport r;
      r.method = m;
      r.dataset = "glyphs";
      r.shift = lvl == 0 ? "none" : "rotation_" + std::to_string(15 * lvl);
      r.coverage = 0.99 - 0.05 * lvl;
      r.width = 1.0 + 0.3 * lvl;
      r.n = 100;
      rows.push_back(r);
    }
  }
  write_file(dir + "/rows.csv", reports_to_csv(rows, ""));
  HarnessConfig cfg = parse_config_text("");
  cfg.out_dir = dir + "/out";
  cfg.report_inputs = {dir + "/rows.csv"};
  const auto written = cmd_report(cfg);
  CHECK(written.size() >= 3);
  const std::string first = slurp(written[0]);
  const auto written2 = cmd_report(cfg);
  CHECK(slurp(written2[0]) == first);  // byte-identical on identical input
  bool saw_rotation = false;
  for (const auto& p : written) {
    if (p.find("rotation") != std::string::npos) saw_rotation = true;
  }
  CHECK(saw_rotation);
}

TEST_CASE("cmd_regress: linreg nominal coverage, determinism, alpha ordering") {
  const std::string dir = fresh_dir("regress");
  const TabularDataset line = testsupport::make_line_dataset(400, 7);
  testsupport::write_regression_csv(line, dir + "/line.csv");

  HarnessConfig cfg = parse_config_text("");
  cfg.out_dir = dir + "/out1";
  cfg.regress_datasets = {dir + "/line.csv"};
  cfg.regress_methods = {"linreg", "gp"};
  cfg.split_seeds = 2;
  cfg.gp_optimize = true;
  const RunResult r1 = cmd_regress(cfg);
  CHECK_FALSE(r1.any_failed);
  REQUIRE(r1.reports.size() == 4);
  for (const auto& r : r1.reports) {
    CHECK(r.status == "ok");
    CHECK(r.coverage > 0.8);  // nominal 0.95 with small-test noise
    CHECK(r.width > 0.0);
    CHECK(r.n == 40);  // 400 * 0.10
  }

  // byte-identical CSV on re-run into another directory
  cfg.out_dir = dir + "/out2";
  cmd_regress(cfg);
  CHECK(slurp(dir + "/out1/regress_reports.csv") == slurp(dir + "/out2/regress_reports.csv"));

  // alpha = 0.5 strictly narrower than alpha = 0.05 for every method
  HarnessConfig wide = cfg;
  wide.out_dir = dir + "/out_wide";
  wide.alpha = 0.5;
  wide.canonical += "alpha-override";
  const RunResult r_wide = cmd_regress(wide);
  for (std::size_t i = 0; i < r1.reports.size(); ++i) {
    CHECK(r_wide.reports[i].width < r1.reports[i].width);
  }

  // empty method list is a config error
  HarnessConfig empty = cfg;
  empty.regress_methods = {};
  CHECK_THROWS_AS(cmd_regress(empty), ConfigError);
  HarnessConfig unknown = cfg;
  unknown.regress_methods = {"oracle"};
  CHECK_THROWS_AS(cmd_regress(unknown), ConfigError);
}

TEST_CASE("cmd_regress: save_models writes loadable checkpoints") {
  const std::string dir = fresh_dir("save_models");
  const TabularDataset line = testsupport::make_line_dataset(200, 13);
  testsupport::write_regression_csv(line, dir + "/line.csv");

  HarnessConfig cfg = parse_config_text("");
  cfg.out_dir = dir + "/out";
  cfg.regress_datasets = {dir + "/line.csv"};
  cfg.regress_methods = {"dropout"};
  cfg.split_seeds = 1;
  cfg.search_trials = 2;
  cfg.dropout_passes = 10;
  cfg.save_models = true;
  cfg.search_space.layer_choices = {1};
  cfg.search_space.units_min = 4;
  cfg.search_space.units_max = 8;
  cfg.search_space.epochs_min = 5;
  cfg.search_space.epochs_max = 10;
  cfg.search_space.sample_dropout = true;
  const RunResult r = cmd_regress(cfg);
  CHECK_FALSE(r.any_failed);

  const std::string path = dir + "/out/models/line_seed0_dropout.uqck";
  REQUIRE(std::filesystem::exists(path));
  const auto tensors = read_checkpoint(path);
  bool saw_meta = false, saw_weights = false;
  for (const auto& t : tensors) {
    if (t.name == "meta.label_stddev") saw_meta = true;
    if (t.name.find(".w") != std::string::npos) saw_weights = true;
  }
  CHECK(saw_meta);
  CHECK(saw_weights);
}

TEST_CASE("cmd_regress: a failing cell yields a failed row and continues") {
  const std::string dir = fresh_dir("regress_fail");
  const TabularDataset line = testsupport::make_line_dataset(200, 9);
  testsupport::write_regression_csv(line, dir + "/line.csv");
  // 2 rows: splits impossible -> every cell on this dataset fails
  write_file(dir + "/broken.csv", "x0,y\n1,2\n3,4\n");

  HarnessConfig cfg = parse_config_text("");
  cfg.out_dir = dir + "/out";
  cfg.regress_datasets = {dir + "/line.csv", dir + "/broken.csv"};
  cfg.regress_methods = {"linreg"};
  cfg.split_seeds = 1;
  const RunResult result = cmd_regress(cfg);
  CHECK(result.any_failed);
  REQUIRE(result.reports.size() == 2);
  CHECK(result.reports[0].status == "ok");
  CHECK(result.reports[1].status == "failed");
}

TEST_CASE("cmd_mnist_shift: tiny run, rotation-0 row equals the clean row") {
  const std::string dir = fresh_dir("mnist");
  const ImageDataset train = testsupport::make_glyph_dataset(400, 1);
  const ImageDataset test = testsupport::make_glyph_dataset(120, 2);
  testsupport::write_idx(train, dir + "/train-images.idx", dir + "/train-labels.idx");
  testsupport::write_idx(test, dir + "/test-images.idx", dir + "/test-labels.idx");

  HarnessConfig cfg = parse_config_text("");
  cfg.out_dir = dir + "/out";
  cfg.train_images = dir + "/train-images.idx";
  cfg.train_labels_path = dir + "/train-labels.idx";
  cfg.test_images = dir + "/test-images.idx";
  cfg.test_labels_path = dir + "/test-labels.idx";
  cfg.variants = {"vanilla", "temp_scaled"};
  cfg.rotations = {0.0, 15.0};
  cfg.roll_step = 14;
  cfg.classifier_epochs = 6;
  cfg.classifier_batch = 32;
  cfg.classifier_lr = 3e-3;
  cfg.classifier_mc_passes = 4;

  const RunResult result = cmd_mnist_shift(cfg);
  // conditions: clean + rot0 + rot15 + rolls {14, 28}; x 2 variants
  REQUIRE(result.reports.size() == 5 * 2);

  const auto find_row = [&](const std::string& method, const std::string& shift) {
    for (const auto& r : result.reports) {
      if (r.method == method && r.shift == shift) return r;
    }
    FAIL("row not found");
    return CoverageReport{};
  };
  const CoverageReport clean = find_row("vanilla", "none");
  const CoverageReport rot0 = find_row("vanilla", "rotation_0");
  CHECK(clean.coverage == rot0.coverage);
  CHECK(clean.width == rot0.width);
  CHECK(*clean.accuracy == *rot0.accuracy);
  CHECK(clean.accuracy.has_value());
  CHECK(*clean.accuracy > 0.5);

  // temperature-scaled rows exist and carry calibrated probabilities
  const CoverageReport ts = find_row("temp_scaled", "none");
  CHECK(ts.n == 120);
  CHECK(ts.brier.has_value());

  CHECK(std::filesystem::exists(dir + "/out/mnist_shift_reports.csv"));
  CHECK(std::filesystem::exists(dir + "/out/mnist_width_shift_corr.csv"));

  // roll s and width-s share the shift distance: d(14)=14, d(28)=0
  const CoverageReport roll28 = find_row("vanilla", "roll_28");
  CHECK(roll28.coverage == clean.coverage);  // roll by width is the identity
}

TEST_CASE("width_shift_correlations: hand-built rows give exact correlation") {
  std::vector<CoverageReport> rows;
  for (int s = 0; s <= 28; s += 2) {
    CoverageReport r;
    r.method = "svi";
    r.shift = s == 0 ? "none" : "roll_" + std::to_string(s);
    r.width = 1.0 + 0.1 * roll_shift_distance(s, 28);  // exactly linear in d(s)
    rows.push_back(r);
  }
  const auto corr = width_shift_correlations(rows, 28);
  CHECK(corr.at("svi") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parallel_for matches serial execution and propagates errors") {
  std::vector<int> a(100, 0), b(100, 0);
  parallel_for(100, 1, [&](std::size_t i) { a[i] = static_cast<int>(i * i); });
  parallel_for(100, 4, [&](std::size_t i) { b[i] = static_cast<int>(i * i); });
  CHECK(a == b);
  CHECK_THROWS_AS(
      parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw std::runtime_error("boom"); }),
      std::runtime_error);
}
