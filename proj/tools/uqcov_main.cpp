#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "uqcov/harness.hpp"

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  double alpha = -1.0;
  int threads = 0;
};

uqcov::HarnessConfig load_config(const GlobalFlags& flags) {
  uqcov::HarnessConfig cfg = flags.config_path.empty()
                                 ? uqcov::parse_config_text("")
                                 : uqcov::parse_config_file(flags.config_path);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
  if (flags.alpha > 0.0) cfg.alpha = flags.alpha;
  if (flags.threads > 0) cfg.threads = flags.threads;
  // Overrides change the run, so they re-enter the canonical description.
  cfg.canonical += "override.seed=" + std::to_string(cfg.seed) + "\n";
  cfg.canonical += "override.alpha=" + std::to_string(cfg.alpha) + "\n";
  return cfg;
}

int run_reports(const uqcov::RunResult& result) {
  std::size_t failed = 0;
  for (const auto& r : result.reports) {
    if (r.status != "ok") ++failed;
  }
  std::cout << result.reports.size() << " report rows (" << failed << " failed)\n";
  return result.any_failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coverage and width evaluation for uncertainty quantification methods"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "Path to the experiment config file");
  app.add_option("--out", flags.out_dir, "Output directory (overrides config)");
  app.add_option("--seed", flags.seed, "Base seed (overrides config)");
  app.add_option("--alpha", flags.alpha, "Interval/set level alpha (overrides config)");
  app.add_option("--threads", flags.threads, "Worker threads (overrides config)");

  auto* regress = app.add_subcommand("regress", "Regression coverage benchmark");
  auto* mnist = app.add_subcommand("mnist-shift", "Classifier shift study on IDX data");
  auto* setcov = app.add_subcommand("setcov", "Set coverage over probability files");
  auto* analyze = app.add_subcommand("analyze", "Cross-method analysis of report files");
  auto* report = app.add_subcommand("report", "Render SVG plots from report files");

  std::vector<std::string> probfile_args, report_args;
  bool logits_flag = false;
  setcov->add_option("files", probfile_args, "Probability CSV files");
  setcov->add_flag("--logits", logits_flag, "Value columns are pre-softmax scores");
  analyze->add_option("files", report_args, "Report CSV files");
  report->add_option("files", report_args, "Report CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    uqcov::HarnessConfig cfg = load_config(flags);
    if (regress->parsed()) {
      return run_reports(uqcov::cmd_regress(cfg));
    }
    if (mnist->parsed()) {
      return run_reports(uqcov::cmd_mnist_shift(cfg));
    }
    if (setcov->parsed()) {
      if (!probfile_args.empty()) cfg.probfiles = probfile_args;
      if (logits_flag) cfg.probfiles_are_logits = true;
      return run_reports(uqcov::cmd_setcov(cfg));
    }
    if (analyze->parsed()) {
      if (!report_args.empty()) cfg.analyze_reports = report_args;
      const auto result = uqcov::cmd_analyze(cfg);
      std::cout << result.levels.size() << " severity levels analyzed\n";
      return 0;
    }
    if (report->parsed()) {
      if (!report_args.empty()) cfg.report_inputs = report_args;
      const auto written = uqcov::cmd_report(cfg);
      for (const auto& p : written) std::cout << p << "\n";
      return 0;
    }
  } catch (const uqcov::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
