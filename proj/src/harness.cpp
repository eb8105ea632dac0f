#include "uqcov/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "uqcov/checkpoint.hpp"
#include "uqcov/gp.hpp"
#include "uqcov/linreg.hpp"
#include "uqcov/probfile.hpp"
#include "uqcov/svgplot.hpp"

namespace uqcov {

namespace {

// ------------------------------------------------------------- config file

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(s);
  while (std::getline(ss, field, ';')) {
    const std::string t = trim(field);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(d);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<double> to_double_list(const std::string& key, const std::string& v,
                                   std::size_t expect = 0) {
  std::vector<double> out;
  for (const auto& f : split_list(v)) out.push_back(to_double(key, f));
  if (expect && out.size() != expect) {
    throw ConfigError("config: key '" + key + "' expects " + std::to_string(expect) +
                      " values");
  }
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v,
                             std::size_t expect = 0) {
  std::vector<int> out;
  for (const auto& f : split_list(v)) out.push_back(to_int(key, f));
  if (expect && out.size() != expect) {
    throw ConfigError("config: key '" + key + "' expects " + std::to_string(expect) +
                      " values");
  }
  return out;
}

template <std::size_t N>
void fill_array(std::array<double, N>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < N; ++i) dst[i] = src[i];
}

void apply_key(HarnessConfig& c, const std::string& section, const std::string& key,
               const std::string& value) {
  const std::string full = section + "." + key;
  if (section == "global") {
    if (key == "alpha") {
      c.alpha = to_double(full, value);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(to_int(full, value));
    } else if (key == "threads") {
      c.threads = to_int(full, value);
    } else if (key == "out_dir") {
      c.out_dir = value;
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else if (section == "regress") {
    if (key == "datasets") {
      c.regress_datasets = split_list(value);
    } else if (key == "target_column") {
      c.target_column = value;
    } else if (key == "methods") {
      c.regress_methods = split_list(value);
    } else if (key == "split_seeds") {
      c.split_seeds = to_int(full, value);
    } else if (key == "split_fractions") {
      const auto f = to_double_list(full, value, 3);
      c.train_fraction = f[0];
      c.val_fraction = f[1];
      c.test_fraction = f[2];
    } else if (key == "search_trials") {
      c.search_trials = to_int(full, value);
    } else if (key == "ensemble_size") {
      c.ensemble_size = to_int(full, value);
    } else if (key == "dropout_passes") {
      c.dropout_passes = to_int(full, value);
    } else if (key == "svi_mc_samples") {
      c.svi_mc_samples = to_int(full, value);
    } else if (key == "gp_optimize") {
      c.gp_optimize = to_bool(full, value);
    } else if (key == "gp_max_train") {
      c.gp_max_train = to_int(full, value);
    } else if (key == "gp_opt_subsample") {
      c.gp_opt_subsample = to_int(full, value);
    } else if (key == "save_models") {
      c.save_models = to_bool(full, value);
    } else if (key == "search_layers") {
      c.search_space.layer_choices = to_int_list(full, value);
    } else if (key == "search_units") {
      const auto u = to_int_list(full, value, 2);
      c.search_space.units_min = u[0];
      c.search_space.units_max = u[1];
    } else if (key == "search_lr") {
      const auto u = to_double_list(full, value, 2);
      c.search_space.lr_min = u[0];
      c.search_space.lr_max = u[1];
    } else if (key == "search_dropout") {
      const auto u = to_double_list(full, value, 2);
      c.search_space.dropout_min = u[0];
      c.search_space.dropout_max = u[1];
    } else if (key == "search_batches") {
      c.search_space.batch_choices = to_int_list(full, value);
    } else if (key == "search_epochs") {
      const auto u = to_int_list(full, value, 2);
      c.search_space.epochs_min = u[0];
      c.search_space.epochs_max = u[1];
    } else if (key == "search_weight_decay") {
      c.search_space.weight_decay = to_double(full, value);
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else if (section == "mnist_shift") {
    if (key == "train_images") {
      c.train_images = value;
    } else if (key == "train_labels") {
      c.train_labels_path = value;
    } else if (key == "test_images") {
      c.test_images = value;
    } else if (key == "test_labels") {
      c.test_labels_path = value;
    } else if (key == "variants") {
      c.variants = split_list(value);
    } else if (key == "rotations") {
      c.rotations = to_double_list(full, value);
    } else if (key == "roll_step") {
      c.roll_step = to_int(full, value);
    } else if (key == "include_rolls") {
      c.include_rolls = to_bool(full, value);
    } else if (key == "eval_limit") {
      c.eval_limit = to_int(full, value);
    } else if (key == "val_fraction") {
      c.classifier_val_fraction = to_double(full, value);
    } else if (key == "epochs") {
      c.classifier_epochs = to_int(full, value);
    } else if (key == "learning_rate") {
      c.classifier_lr = to_double(full, value);
    } else if (key == "batch_size") {
      c.classifier_batch = to_int(full, value);
    } else if (key == "dropout_rate") {
      c.classifier_dropout = to_double(full, value);
    } else if (key == "mc_passes") {
      c.classifier_mc_passes = to_int(full, value);
    } else if (key == "ensemble_members") {
      c.classifier_ensemble_members = to_int(full, value);
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else if (section == "corruptions") {
    if (key == "gaussian_noise") {
      fill_array(c.corruptions.gaussian_noise_sigma, to_double_list(full, value, 5));
    } else if (key == "impulse_noise") {
      fill_array(c.corruptions.impulse_noise_fraction, to_double_list(full, value, 5));
    } else if (key == "gaussian_blur") {
      fill_array(c.corruptions.gaussian_blur_sigma, to_double_list(full, value, 5));
    } else if (key == "brightness") {
      fill_array(c.corruptions.brightness_delta, to_double_list(full, value, 5));
    } else if (key == "contrast") {
      fill_array(c.corruptions.contrast_scale, to_double_list(full, value, 5));
    } else if (key == "pixelate") {
      const auto u = to_int_list(full, value, 5);
      for (std::size_t i = 0; i < 5; ++i) c.corruptions.pixelate_block[i] = u[i];
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else if (section == "setcov") {
    if (key == "files") {
      c.probfiles = split_list(value);
    } else if (key == "logits") {
      c.probfiles_are_logits = to_bool(full, value);
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else if (section == "analyze") {
    if (key == "reports") {
      c.analyze_reports = split_list(value);
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else if (section == "report") {
    if (key == "inputs") {
      c.report_inputs = split_list(value);
    } else {
      throw ConfigError("config: unknown key '" + full + "'");
    }
  } else {
    throw ConfigError("config: unknown section '" + section + "'");
  }
}

std::string join(const std::vector<std::string>& xs, const char* sep = ";") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string build_canonical(const HarnessConfig& c) {
  // out_dir and threads are excluded: they do not affect the results.
  std::string s;
  s += "alpha=" + fmt_g(c.alpha) + "\n";
  s += "seed=" + std::to_string(c.seed) + "\n";
  s += "regress.datasets=" + join(c.regress_datasets) + "\n";
  s += "regress.target_column=" + c.target_column + "\n";
  s += "regress.methods=" + join(c.regress_methods) + "\n";
  s += "regress.split_seeds=" + std::to_string(c.split_seeds) + "\n";
  s += "regress.split_fractions=" + fmt_g(c.train_fraction) + ";" + fmt_g(c.val_fraction) +
       ";" + fmt_g(c.test_fraction) + "\n";
  s += "regress.search_trials=" + std::to_string(c.search_trials) + "\n";
  s += "regress.ensemble_size=" + std::to_string(c.ensemble_size) + "\n";
  s += "regress.dropout_passes=" + std::to_string(c.dropout_passes) + "\n";
  s += "regress.svi_mc_samples=" + std::to_string(c.svi_mc_samples) + "\n";
  s += "regress.gp_optimize=" + std::string(c.gp_optimize ? "true" : "false") + "\n";
  s += "regress.gp_max_train=" + std::to_string(c.gp_max_train) + "\n";
  s += "regress.gp_opt_subsample=" + std::to_string(c.gp_opt_subsample) + "\n";
  const auto& sp = c.search_space;
  s += "regress.search_layers=";
  for (std::size_t i = 0; i < sp.layer_choices.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(sp.layer_choices[i]);
  }
  s += "\n";
  s += "regress.search_units=" + std::to_string(sp.units_min) + ";" +
       std::to_string(sp.units_max) + "\n";
  s += "regress.search_lr=" + fmt_g(sp.lr_min) + ";" + fmt_g(sp.lr_max) + "\n";
  s += "regress.search_dropout=" + fmt_g(sp.dropout_min) + ";" + fmt_g(sp.dropout_max) + "\n";
  s += "regress.search_batches=";
  for (std::size_t i = 0; i < sp.batch_choices.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(sp.batch_choices[i]);
  }
  s += "\n";
  s += "regress.search_epochs=" + std::to_string(sp.epochs_min) + ";" +
       std::to_string(sp.epochs_max) + "\n";
  s += "regress.search_weight_decay=" + fmt_g(sp.weight_decay) + "\n";
  s += "mnist.files=" + c.train_images + ";" + c.train_labels_path + ";" + c.test_images +
       ";" + c.test_labels_path + "\n";
  s += "mnist.variants=" + join(c.variants) + "\n";
  s += "mnist.rotations=";
  for (std::size_t i = 0; i < c.rotations.size(); ++i) {
    if (i) s += ";";
    s += fmt_g(c.rotations[i]);
  }
  s += "\n";
  s += "mnist.roll_step=" + std::to_string(c.roll_step) + "\n";
  s += "mnist.include_rolls=" + std::string(c.include_rolls ? "true" : "false") + "\n";
  s += "mnist.eval_limit=" + std::to_string(c.eval_limit) + "\n";
  s += "mnist.val_fraction=" + fmt_g(c.classifier_val_fraction) + "\n";
  s += "mnist.epochs=" + std::to_string(c.classifier_epochs) + "\n";
  s += "mnist.learning_rate=" + fmt_g(c.classifier_lr) + "\n";
  s += "mnist.batch_size=" + std::to_string(c.classifier_batch) + "\n";
  s += "mnist.dropout_rate=" + fmt_g(c.classifier_dropout) + "\n";
  s += "mnist.mc_passes=" + std::to_string(c.classifier_mc_passes) + "\n";
  s += "mnist.ensemble_members=" + std::to_string(c.classifier_ensemble_members) + "\n";
  for (int sev = 1; sev <= 5; ++sev) {
    s += "corruptions.sev" + std::to_string(sev) + "=";
    for (auto kind : {CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise,
                      CorruptionKind::gaussian_blur, CorruptionKind::brightness,
                      CorruptionKind::contrast, CorruptionKind::pixelate}) {
      s += fmt_g(c.corruptions.value(kind, sev)) + ";";
    }
    s += "\n";
  }
  s += "setcov.files=" + join(c.probfiles) + "\n";
  s += "setcov.logits=" + std::string(c.probfiles_are_logits ? "true" : "false") + "\n";
  s += "analyze.reports=" + join(c.analyze_reports) + "\n";
  s += "report.inputs=" + join(c.report_inputs) + "\n";
  return s;
}

void validate(HarnessConfig& c) {
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("config: alpha outside (0,1)");
  if (c.threads < 1) throw ConfigError("config: threads must be >= 1");
  if (c.split_seeds < 1) throw ConfigError("config: split_seeds must be >= 1");
  if (c.search_trials < 1) throw ConfigError("config: search_trials must be >= 1");
  if (c.ensemble_size < 2) throw ConfigError("config: ensemble_size must be >= 2");
  if (c.dropout_passes < 1) throw ConfigError("config: dropout_passes must be >= 1");
  if (c.roll_step < 1) throw ConfigError("config: roll_step must be >= 1");
  c.canonical = build_canonical(c);
}

// ------------------------------------------------------------- file output

void ensure_out_dir(const HarnessConfig& c) {
  std::filesystem::create_directories(c.out_dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

constexpr const char* kRegressMethods[] = {"linreg",     "gp",  "ensemble", "dropout",
                                           "ll_dropout", "svi", "ll_svi"};

bool is_known_method(const std::string& m) {
  for (const char* k : kRegressMethods) {
    if (m == k) return true;
  }
  return false;
}

}  // namespace

HarnessConfig parse_config_text(const std::string& text) {
  HarnessConfig c;
  std::stringstream ss(text);
  std::string line;
  std::string section = "global";
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config: malformed section header on line " +
                          std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected 'key = value' on line " + std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_key(c, section, key, value);
  }
  validate(c);
  return c;
}

HarnessConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_hash(const HarnessConfig& config) {
  const std::string s = config.canonical.empty() ? build_canonical(config) : config.canonical;
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const int workers = std::min<int>(threads, static_cast<int>(n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- regress

namespace {

struct RegressCell {
  std::size_t dataset_index;
  int split_index;
  std::size_t method_index;
};

std::string search_log_csv_header() {
  return "dataset,seed,method,trial,layers,units,learning_rate,dropout,batch,epochs,"
         "val_rmse,status\n";
}

std::string search_log_rows(const std::string& dataset, std::uint64_t seed,
                            const std::string& method, const SearchResult& sr) {
  std::string out;
  for (std::size_t t = 0; t < sr.trials.size(); ++t) {
    const auto& rec = sr.trials[t];
    out += dataset + "," + std::to_string(seed) + "," + method + "," + std::to_string(t) +
           "," + std::to_string(rec.config.hidden_sizes.size()) + "," +
           std::to_string(rec.config.hidden_sizes.empty() ? 0 : rec.config.hidden_sizes[0]) +
           "," + fmt_g(rec.config.learning_rate) + "," + fmt_g(rec.config.dropout_rate) +
           "," + std::to_string(rec.config.batch_size) + "," +
           std::to_string(rec.config.epochs) + "," +
           (std::isfinite(rec.val_rmse) ? fmt_g(rec.val_rmse) : std::string("inf")) + "," +
           (rec.status == "ok" ? "ok" : "diverged") + "\n";
  }
  return out;
}

SviConfig svi_config_from(const MlpConfig& champion, bool last_layer, int mc_samples) {
  SviConfig sc;
  sc.hidden_sizes = champion.hidden_sizes;
  sc.learning_rate = champion.learning_rate;
  sc.batch_size = champion.batch_size;
  sc.epochs = champion.epochs;
  sc.last_layer_only = last_layer;
  sc.mc_samples = mc_samples;
  sc.seed = champion.seed;
  return sc;
}

CoverageReport run_regress_cell(const TabularDataset& raw, const HarnessConfig& cfg,
                                std::uint64_t split_seed, const std::string& method,
                                std::uint64_t cell_seed, std::string* search_log,
                                const std::string& save_prefix) {
  const SplitSpec split = make_splits(raw.size(), split_seed, cfg.train_fraction,
                                      cfg.val_fraction, cfg.test_fraction);
  const TabularDataset train_raw = select_rows(raw, split.train);
  const Standardizer stdz = fit_standardizer(train_raw);
  const TabularDataset train = apply_standardizer(stdz, train_raw);
  const TabularDataset val = apply_standardizer(stdz, select_rows(raw, split.val));
  const TabularDataset test = apply_standardizer(stdz, select_rows(raw, split.test));
  const double s_y = stdz.label_stddev;
  const double alpha = cfg.alpha;

  std::vector<PredictionInterval> intervals;
  intervals.reserve(test.size());

  if (method == "linreg") {
    const LinearRegressionFit fit = fit_linear_regression(train);
    for (std::size_t i = 0; i < test.size(); ++i) {
      intervals.push_back(lr_interval(fit, test.features.row(i), alpha));
    }
  } else if (method == "gp") {
    GpConfig gc;
    gc.optimize = cfg.gp_optimize;
    gc.max_train = cfg.gp_max_train;
    gc.optimize_subsample = cfg.gp_opt_subsample;
    gc.seed = cell_seed;
    const GpRegressor gp = train_gp(train, gc);
    for (std::size_t i = 0; i < test.size(); ++i) {
      intervals.push_back(interval_from_gaussian(gp.predict(test.features.row(i)), alpha));
    }
  } else {
    SearchSpace space = cfg.search_space;
    space.sample_dropout = (method == "dropout" || method == "ll_dropout");
    space.dropout_last_layer_only = (method == "ll_dropout");
    const SearchResult sr = random_search(train, val, cfg.search_trials, space, cell_seed);
    if (search_log) *search_log = search_log_rows(raw.name, split_seed, method, sr);
    const MlpConfig champion = sr.best;

    if (method == "ensemble") {
      auto models = train_ensemble(train, val, champion, cfg.ensemble_size);
      for (std::size_t i = 0; i < test.size(); ++i) {
        intervals.push_back(
            interval_from_samples(ensemble_predict(models, test.features.row(i)), alpha));
      }
      if (!save_prefix.empty()) {
        for (std::size_t m = 0; m < models.size(); ++m) {
          save_net(save_prefix + "_member" + std::to_string(m) + ".uqck", models[m].net(),
                   {{"label_mean", models[m].label_mean()},
                    {"label_stddev", models[m].label_stddev()}});
        }
      }
    } else if (method == "dropout" || method == "ll_dropout") {
      MlpRegressor model = train_mlp(train, val, champion);
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto samples = mc_dropout_predict(model, test.features.row(i),
                                                cfg.dropout_passes,
                                                cell_seed * 1000003ull + i);
        intervals.push_back(interval_from_samples(samples, alpha));
      }
      if (!save_prefix.empty()) {
        save_net(save_prefix + ".uqck", model.net(),
                 {{"label_mean", model.label_mean()},
                  {"label_stddev", model.label_stddev()}});
      }
    } else if (method == "svi" || method == "ll_svi") {
      const SviConfig sc = svi_config_from(champion, method == "ll_svi", cfg.svi_mc_samples);
      SviRegressor model = train_svi(train, val, sc);
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto pred = model.predict(test.features.row(i), cfg.svi_mc_samples,
                                        cell_seed * 1000003ull + i);
        intervals.push_back(interval_from_gaussian(pred, alpha));
      }
      if (!save_prefix.empty()) {
        save_net(save_prefix + ".uqck", model.net(),
                 {{"label_mean", model.label_mean()},
                  {"label_stddev", model.label_stddev()},
                  {"log_noise_var", model.log_noise_var_standardized()}});
      }
    } else {
      throw ConfigError("unknown regression method '" + method + "'");
    }
  }

  CoverageReport r;
  r.method = method;
  r.dataset = raw.name;
  r.alpha = alpha;
  r.coverage = coverage_intervals(intervals, test.labels);
  r.width = width_regression(intervals, s_y);
  r.n = test.size();
  r.seed = split_seed;
  return r;
}

}  // namespace

RunResult cmd_regress(const HarnessConfig& config) {
  if (config.regress_methods.empty()) throw ConfigError("regress: empty method list");
  for (const auto& m : config.regress_methods) {
    if (!is_known_method(m)) throw ConfigError("regress: unknown method '" + m + "'");
  }
  if (config.regress_datasets.empty()) throw ConfigError("regress: no datasets given");

  std::vector<TabularDataset> datasets;
  for (const auto& path : config.regress_datasets) {
    // Numeric target selector or header name.
    const std::string& t = config.target_column;
    bool numeric = !t.empty() && (std::isdigit(static_cast<unsigned char>(t[0])) ||
                                  t[0] == '-' || t[0] == '+');
    datasets.push_back(numeric ? load_tabular(path, std::stoi(t)) : load_tabular(path, t));
  }

  std::vector<RegressCell> cells;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (int s = 0; s < config.split_seeds; ++s) {
      for (std::size_t m = 0; m < config.regress_methods.size(); ++m) {
        cells.push_back({d, s, m});
      }
    }
  }

  std::vector<CoverageReport> reports(cells.size());
  std::vector<std::string> search_logs(cells.size());
  std::atomic<bool> any_failed{false};
  if (config.save_models) {
    std::filesystem::create_directories(config.out_dir + "/models");
  }

  parallel_for(cells.size(), config.threads, [&](std::size_t ci) {
    const RegressCell& cell = cells[ci];
    const std::string& method = config.regress_methods[cell.method_index];
    const TabularDataset& data = datasets[cell.dataset_index];
    const std::uint64_t split_seed = config.seed + static_cast<std::uint64_t>(cell.split_index);
    const std::uint64_t cell_seed =
        ((config.seed * 1000003ull + cell.dataset_index) * 1000003ull +
         static_cast<std::uint64_t>(cell.split_index)) *
            1000003ull +
        cell.method_index;
    std::string save_prefix;
    if (config.save_models) {
      save_prefix = config.out_dir + "/models/" + data.name + "_seed" +
                    std::to_string(split_seed) + "_" + method;
    }
    try {
      reports[ci] = run_regress_cell(data, config, split_seed, method, cell_seed,
                                     &search_logs[ci], save_prefix);
    } catch (const std::exception& e) {
      CoverageReport r;
      r.method = method;
      r.dataset = data.name;
      r.alpha = config.alpha;
      r.seed = split_seed;
      r.status = "failed";
      reports[ci] = r;
      any_failed = true;
      std::cerr << "[regress] cell failed (" << data.name << ", seed " << split_seed
                << ", " << method << "): " << e.what() << "\n";
    }
  });

  ensure_out_dir(config);
  const std::string hash = config_hash(config);
  write_text(config.out_dir + "/regress_reports.csv", reports_to_csv(reports, hash));
  write_text(config.out_dir + "/regress_reports.json", reports_to_json(reports));

  std::string log = search_log_csv_header();
  for (const auto& l : search_logs) log += l;
  write_text(config.out_dir + "/search_log.csv", log);

  // Per-method aggregate (the coverage/width of the method averaged over
  // datasets and split seeds, with standard deviations).
  std::string summary = "method,mean_coverage,sd_coverage,mean_width,sd_width,cells\n";
  for (const auto& m : config.regress_methods) {
    std::vector<double> covs, widths;
    for (const auto& r : reports) {
      if (r.method == m && r.status == "ok") {
        covs.push_back(r.coverage);
        widths.push_back(r.width);
      }
    }
    if (covs.empty()) {
      summary += m + ",,,,0\n";
      continue;
    }
    const double mc = mean(covs), mw = mean(widths);
    const double sc = covs.size() > 1 ? sample_stddev(covs) : 0.0;
    const double sw = widths.size() > 1 ? sample_stddev(widths) : 0.0;
    summary += m + "," + fmt_g(mc) + "," + fmt_g(sc) + "," + fmt_g(mw) + "," + fmt_g(sw) +
               "," + std::to_string(covs.size()) + "\n";
  }
  write_text(config.out_dir + "/regress_summary.csv", summary);

  return {std::move(reports), any_failed.load()};
}

// ------------------------------------------------------------ mnist shift

namespace {

struct ShiftCondition {
  ShiftSpec spec;
  // x-axis placement for the sweep plots and the width/shift correlation
  double roll_distance = 0.0;
  bool counts_for_roll = false;
};

Matrix eval_probs(const Classifier& model, double temperature, const ImageDataset& data,
                  int mc_passes, std::uint64_t base_seed) {
  if (temperature > 0.0) {
    return apply_temperature(predict_logits_matrix(model, data), temperature);
  }
  return predict_probs_matrix(model, data, mc_passes, base_seed);
}

}  // namespace

RunResult cmd_mnist_shift(const HarnessConfig& config) {
  if (config.variants.empty()) throw ConfigError("mnist-shift: empty variant list");
  if (config.train_images.empty() || config.train_labels_path.empty() ||
      config.test_images.empty() || config.test_labels_path.empty()) {
    throw ConfigError("mnist-shift: train/test IDX paths are required");
  }
  for (const auto& v : config.variants) {
    if (v != "temp_scaled") classifier_variant_from_name(v);  // validates
  }

  const ImageDataset train_full = load_idx(config.train_images, config.train_labels_path);
  ImageDataset test = load_idx(config.test_images, config.test_labels_path);
  if (config.eval_limit > 0 && test.size() > static_cast<std::size_t>(config.eval_limit)) {
    std::vector<std::size_t> idx(config.eval_limit);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    test = select_images(test, idx);
  }
  const int width = test.images.empty() ? 0 : test.images.front().width;

  // Train/validation split of the clean training data.
  std::vector<std::size_t> order(train_full.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(config.seed);
  shuffle(order, split_rng);
  const auto n_val = static_cast<std::size_t>(config.classifier_val_fraction *
                                              static_cast<double>(train_full.size()));
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  const std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  const ImageDataset train = select_images(train_full, train_idx);
  const ImageDataset val = select_images(train_full, val_idx);

  // Conditions: clean, rotations, rolls.
  std::vector<ShiftCondition> conditions;
  conditions.push_back({ShiftSpec::none(), 0.0, config.include_rolls});
  std::vector<double> rotations = config.rotations;
  if (rotations.empty()) rotations = rotation_schedule();
  for (double deg : rotations) {
    if (deg > 0.0) conditions.push_back({ShiftSpec::rotation(deg), 0.0, false});
    // A rotation entry of 0 re-evaluates the clean set under the sweep label.
    else conditions.push_back({ShiftSpec::rotation(0.0), 0.0, false});
  }
  if (config.include_rolls && width > 0) {
    for (int px : roll_schedule(width, config.roll_step)) {
      conditions.push_back({ShiftSpec::roll(px),
                            static_cast<double>(roll_shift_distance(px, width)), true});
    }
  }

  // Train each variant once on the clean training data.
  struct TrainedVariant {
    std::string name;
    std::unique_ptr<Classifier> model;
    double temperature = 0.0;  // > 0 -> vanilla logits with temperature
    int eval_passes = 1;
  };
  std::vector<TrainedVariant> trained;
  for (std::size_t vi = 0; vi < config.variants.size(); ++vi) {
    const std::string& name = config.variants[vi];
    ClassifierConfig cc;
    cc.variant = name == "temp_scaled" ? ClassifierVariant::vanilla
                                       : classifier_variant_from_name(name);
    cc.epochs = config.classifier_epochs;
    cc.learning_rate = config.classifier_lr;
    cc.batch_size = config.classifier_batch;
    cc.dropout_rate = config.classifier_dropout;
    cc.mc_passes = config.classifier_mc_passes;
    cc.ensemble_members = config.classifier_ensemble_members;
    cc.seed = config.seed * 1000003ull + vi;
    TrainedVariant tv;
    tv.name = name;
    tv.model = std::make_unique<Classifier>(
        train_classifier(train, val, cc));
    const bool stochastic = cc.variant == ClassifierVariant::dropout ||
                            cc.variant == ClassifierVariant::ll_dropout ||
                            cc.variant == ClassifierVariant::svi ||
                            cc.variant == ClassifierVariant::ll_svi;
    tv.eval_passes = stochastic ? config.classifier_mc_passes : 1;
    if (name == "temp_scaled") {
      if (val.size() == 0) throw ConfigError("mnist-shift: temp_scaled needs a validation split");
      tv.temperature = fit_temperature(predict_logits_matrix(*tv.model, val), val.labels);
    }
    if (config.save_models) {
      std::filesystem::create_directories(config.out_dir + "/models");
      auto& nets = tv.model->nets();
      for (std::size_t m = 0; m < nets.size(); ++m) {
        save_net(config.out_dir + "/models/" + name + "_member" + std::to_string(m) +
                     ".uqck",
                 nets[m], {{"temperature", tv.temperature}});
      }
    }
    trained.push_back(std::move(tv));
  }

  // Evaluate; rows indexed (condition, variant) for a deterministic order.
  std::vector<CoverageReport> reports(conditions.size() * trained.size());
  parallel_for(conditions.size(), config.threads, [&](std::size_t ci) {
    const ShiftCondition& cond = conditions[ci];
    ImageDataset shifted;
    const ImageDataset* eval_set = &test;
    if (cond.spec.kind != ShiftSpec::Kind::none) {
      auto sweep = shift_sweep(test, {cond.spec}, config.seed, config.corruptions);
      shifted = std::move(sweep.front().second);
      eval_set = &shifted;
    }
    for (std::size_t vi = 0; vi < trained.size(); ++vi) {
      const TrainedVariant& tv = trained[vi];
      const Matrix probs = eval_probs(*tv.model, tv.temperature, *eval_set,
                                      tv.eval_passes, config.seed * 7919ull + ci);
      std::vector<PredictionSet> sets;
      sets.reserve(probs.rows);
      for (std::size_t i = 0; i < probs.rows; ++i) {
        sets.push_back(prediction_set(probs.row(i), config.alpha));
      }
      CoverageReport r;
      r.method = tv.name;
      r.dataset = test.name;
      r.shift = cond.spec.describe();
      r.severity = 0;
      r.alpha = config.alpha;
      r.coverage = coverage_sets(sets, eval_set->labels);
      r.width = width_sets(sets);
      r.brier = brier(probs, eval_set->labels);
      r.ece = ece(probs, eval_set->labels);
      r.accuracy = accuracy(probs, eval_set->labels);
      r.n = eval_set->size();
      r.seed = config.seed;
      reports[ci * trained.size() + vi] = std::move(r);
    }
  });

  ensure_out_dir(config);
  const std::string hash = config_hash(config);
  write_text(config.out_dir + "/mnist_shift_reports.csv", reports_to_csv(reports, hash));
  write_text(config.out_dir + "/mnist_shift_reports.json", reports_to_json(reports));

  // Width/shift-distance correlation over the roll sweep (clean = roll 0).
  std::string corr_csv = "method,pearson_width_vs_shift_distance,levels\n";
  if (config.include_rolls && width > 0) {
    const auto corr = width_shift_correlations(reports, width);
    for (const auto& [m, c] : corr) {
      std::size_t count = 0;
      for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
        if (conditions[ci].counts_for_roll) ++count;
      }
      corr_csv += m + "," + fmt_g(c) + "," + std::to_string(count) + "\n";
    }
  }
  write_text(config.out_dir + "/mnist_width_shift_corr.csv", corr_csv);

  return {std::move(reports), false};
}

std::map<std::string, double> width_shift_correlations(
    const std::vector<CoverageReport>& reports, int image_width) {
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& r : reports) {
    if (r.status != "ok") continue;
    double distance = -1.0;
    if (r.shift == "none") {
      distance = 0.0;
    } else if (r.shift.rfind("roll_", 0) == 0) {
      const int px = std::stoi(r.shift.substr(5));
      distance = roll_shift_distance(px, image_width);
    }
    if (distance >= 0.0) series[r.method].push_back({distance, r.width});
  }
  std::map<std::string, double> out;
  for (const auto& [m, pts] : series) {
    if (pts.size() < 3) continue;
    std::vector<double> xs, ys;
    for (const auto& [d, w] : pts) {
      xs.push_back(d);
      ys.push_back(w);
    }
    out[m] = pearson(xs, ys);
  }
  return out;
}

// ----------------------------------------------------------------- setcov

RunResult cmd_setcov(const HarnessConfig& config) {
  if (config.probfiles.empty()) throw ConfigError("setcov: no probability files given");
  std::vector<CoverageReport> reports(config.probfiles.size());
  parallel_for(config.probfiles.size(), config.threads, [&](std::size_t fi) {
    const ProbabilityTable t = read_probfile(config.probfiles[fi], config.probfiles_are_logits);
    std::vector<PredictionSet> sets;
    sets.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      sets.push_back(prediction_set(t.probabilities.row(i), config.alpha));
    }
    CoverageReport r;
    r.method = t.method;
    r.dataset = t.dataset;
    r.shift = t.shift;
    r.severity = t.severity;
    r.alpha = config.alpha;
    r.coverage = coverage_sets(sets, t.labels);
    r.width = width_sets(sets);
    r.brier = brier(t.probabilities, t.labels);
    r.ece = ece(t.probabilities, t.labels);
    r.accuracy = accuracy(t.probabilities, t.labels);
    r.n = t.size();
    r.seed = 0;
    reports[fi] = std::move(r);
  });

  ensure_out_dir(config);
  const std::string hash = config_hash(config);
  write_text(config.out_dir + "/setcov_reports.csv", reports_to_csv(reports, hash));
  write_text(config.out_dir + "/setcov_reports.json", reports_to_json(reports));
  return {std::move(reports), false};
}

// ---------------------------------------------------------------- analyze

namespace {

std::vector<CoverageReport> load_reports(const std::vector<std::string>& paths) {
  std::vector<CoverageReport> all;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("analyze: cannot open " + p);
    std::stringstream buf;
    buf << in.rdbuf();
    auto rows = reports_from_csv(buf.str());
    for (auto& r : rows) {
      if (r.status == "ok") all.push_back(std::move(r));
    }
  }
  return all;
}

}  // namespace

AnalysisResult cmd_analyze(const HarnessConfig& config) {
  if (config.analyze_reports.empty()) throw ConfigError("analyze: no report files given");
  const auto rows = load_reports(config.analyze_reports);
  std::set<std::string> methods;
  for (const auto& r : rows) methods.insert(r.method);
  if (methods.size() < 2) {
    throw std::invalid_argument("analyze: need at least 2 methods, found " +
                                std::to_string(methods.size()));
  }

  std::set<int> severities;
  for (const auto& r : rows) severities.insert(r.severity);

  AnalysisResult result;
  for (int sev : severities) {
    std::vector<MethodPoint> points;
    std::map<std::string, std::vector<double>> cov, bri, ec;
    for (const auto& r : rows) {
      if (r.severity != sev) continue;
      points.push_back({r.method, r.width, r.coverage});
      cov[r.method].push_back(r.coverage);
      if (r.brier) bri[r.method].push_back(*r.brier);
      if (r.ece) ec[r.method].push_back(*r.ece);
    }
    if (points.size() < 2) continue;

    LevelAnalysis level;
    level.severity = sev;
    level.fraction_above = fraction_above_line(points);
    {
      // Re-fit to expose the pooled line parameters in the outputs.
      Matrix x(points.size(), 2);
      std::vector<double> y(points.size());
      for (std::size_t i = 0; i < points.size(); ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = points[i].width;
        y[i] = points[i].coverage;
      }
      const auto beta = ols_fit(x, y);
      level.intercept = beta[0];
      level.slope = beta[1];
    }
    const auto rank_of = [](std::map<std::string, std::vector<double>>& vals,
                            RankDirection dir) {
      std::map<std::string, double> mean_by;
      for (auto& [m, v] : vals) {
        if (!v.empty()) mean_by[m] = mean(v);
      }
      std::map<std::string, double> out;
      if (mean_by.size() >= 2) out = method_ranks(mean_by, dir);
      return out;
    };
    level.coverage_rank = rank_of(cov, RankDirection::higher_better);
    level.brier_rank = rank_of(bri, RankDirection::lower_better);
    level.ece_rank = rank_of(ec, RankDirection::lower_better);
    result.levels.push_back(std::move(level));
  }
  if (result.levels.empty()) {
    throw std::invalid_argument("analyze: no severity level has >= 2 points");
  }

  ensure_out_dir(config);
  std::string fractions = "severity,method,fraction_above_line\n";
  std::string ranks = "severity,metric,method,rank\n";
  nlohmann::json jout = nlohmann::json::array();
  for (const auto& level : result.levels) {
    nlohmann::json jl{{"severity", level.severity},
                      {"intercept", level.intercept},
                      {"slope", level.slope}};
    for (const auto& [m, f] : level.fraction_above) {
      fractions += std::to_string(level.severity) + "," + m + "," + fmt_g(f) + "\n";
      jl["fraction_above"][m] = f;
    }
    const auto emit_ranks = [&](const char* metric, const std::map<std::string, double>& rk) {
      for (const auto& [m, r] : rk) {
        ranks += std::to_string(level.severity) + "," + metric + "," + m + "," + fmt_g(r) + "\n";
        jl["ranks"][metric][m] = r;
      }
    };
    emit_ranks("coverage", level.coverage_rank);
    emit_ranks("brier", level.brier_rank);
    emit_ranks("ece", level.ece_rank);
    jout.push_back(std::move(jl));
  }
  write_text(config.out_dir + "/analysis_fractions.csv", fractions);
  write_text(config.out_dir + "/analysis_ranks.csv", ranks);
  write_text(config.out_dir + "/analysis.json", jout.dump(2) + "\n");
  return result;
}

// ----------------------------------------------------------------- report

namespace {

struct SweepPoint {
  double level;
  double coverage;
  double width;
};

void emit_sweep_plots(const std::string& out_dir, const std::string& kind,
                      const std::map<std::string, std::vector<SweepPoint>>& by_method,
                      const std::string& x_label, std::vector<std::string>& written) {
  SvgPlot cov_plot, width_plot;
  cov_plot.title = "Coverage vs " + kind;
  cov_plot.x_label = x_label;
  cov_plot.y_label = "coverage";
  cov_plot.reference_y = 0.95;
  width_plot.title = "Width vs " + kind;
  width_plot.x_label = x_label;
  width_plot.y_label = "width";
  for (const auto& [m, pts] : by_method) {
    SvgSeries cs, wsr;
    cs.label = m;
    wsr.label = m;
    cs.draw_line = true;
    wsr.draw_line = true;
    auto sorted = pts;
    std::sort(sorted.begin(), sorted.end(),
              [](const SweepPoint& a, const SweepPoint& b) { return a.level < b.level; });
    for (const auto& p : sorted) {
      cs.points.push_back({p.level, p.coverage});
      wsr.points.push_back({p.level, p.width});
    }
    cov_plot.series.push_back(std::move(cs));
    width_plot.series.push_back(std::move(wsr));
  }
  const std::string cov_path = out_dir + "/coverage_vs_" + kind + ".svg";
  const std::string width_path = out_dir + "/width_vs_" + kind + ".svg";
  write_text(cov_path, cov_plot.render());
  write_text(width_path, width_plot.render());
  written.push_back(cov_path);
  written.push_back(width_path);
}

}  // namespace

std::vector<std::string> cmd_report(const HarnessConfig& config) {
  if (config.report_inputs.empty()) throw ConfigError("report: no input files given");
  const auto rows = load_reports(config.report_inputs);
  ensure_out_dir(config);
  std::vector<std::string> written;

  // Overall coverage-vs-width scatter (always emitted, even when empty).
  {
    SvgPlot plot;
    plot.title = "Coverage vs width";
    plot.x_label = "width";
    plot.y_label = "coverage";
    plot.reference_y = 0.95;
    std::map<std::string, SvgSeries> per_method;
    for (const auto& r : rows) {
      auto& s = per_method[r.method];
      s.label = r.method;
      s.points.push_back({r.width, r.coverage});
    }
    for (auto& [m, s] : per_method) plot.series.push_back(std::move(s));
    const std::string path = config.out_dir + "/coverage_vs_width_all.svg";
    write_text(path, plot.render());
    written.push_back(path);
  }

  // Per corruption severity scatter.
  std::set<int> severities;
  for (const auto& r : rows) {
    if (r.severity >= 1) severities.insert(r.severity);
  }
  for (int sev : severities) {
    SvgPlot plot;
    plot.title = "Coverage vs width, severity " + std::to_string(sev);
    plot.x_label = "width";
    plot.y_label = "coverage";
    plot.reference_y = 0.95;
    std::map<std::string, SvgSeries> per_method;
    for (const auto& r : rows) {
      if (r.severity != sev) continue;
      auto& s = per_method[r.method];
      s.label = r.method;
      s.points.push_back({r.width, r.coverage});
    }
    for (auto& [m, s] : per_method) plot.series.push_back(std::move(s));
    const std::string path =
        config.out_dir + "/coverage_vs_width_sev" + std::to_string(sev) + ".svg";
    write_text(path, plot.render());
    written.push_back(path);
  }

  // Rotation and roll sweeps (clean rows enter as level 0).
  std::map<std::string, std::vector<SweepPoint>> rot, rol;
  for (const auto& r : rows) {
    if (r.shift == "none") {
      rot[r.method].push_back({0.0, r.coverage, r.width});
      rol[r.method].push_back({0.0, r.coverage, r.width});
    } else if (r.shift.rfind("rotation_", 0) == 0) {
      rot[r.method].push_back({std::stod(r.shift.substr(9)), r.coverage, r.width});
    } else if (r.shift.rfind("roll_", 0) == 0) {
      rol[r.method].push_back({std::stod(r.shift.substr(5)), r.coverage, r.width});
    }
  }
  const auto has_nonzero = [](const std::map<std::string, std::vector<SweepPoint>>& m) {
    for (const auto& [_, pts] : m) {
      for (const auto& p : pts) {
        if (p.level > 0.0) return true;
      }
    }
    return false;
  };
  if (has_nonzero(rot)) emit_sweep_plots(config.out_dir, "rotation", rot, "degrees", written);
  if (has_nonzero(rol)) emit_sweep_plots(config.out_dir, "roll", rol, "pixels", written);

  return written;
}

}  // namespace uqcov
