#include "uqcov/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace uqcov {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

int argmax_row(std::span<const double> row) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(row.size()); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

void check_prob_rows(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows != labels.size()) {
    throw std::invalid_argument("probability rows and labels differ in length");
  }
  if (probs.cols < 2) throw std::invalid_argument("need at least 2 classes");
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double sum = 0.0;
    for (double p : probs.row(i)) {
      if (p < 0.0 || !std::isfinite(p)) {
        throw std::invalid_argument("invalid probability in row " + std::to_string(i));
      }
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-4) {
      throw std::invalid_argument("row " + std::to_string(i) + " sums to " +
                                  std::to_string(sum));
    }
    if (labels[i] < 0 || labels[i] >= static_cast<int>(probs.cols)) {
      throw std::invalid_argument("label out of range in row " + std::to_string(i));
    }
  }
}

}  // namespace

double coverage_intervals(const std::vector<PredictionInterval>& intervals,
                          std::span<const double> y) {
  if (intervals.size() != y.size()) {
    throw std::invalid_argument("coverage_intervals: length mismatch");
  }
  if (intervals.empty()) throw std::invalid_argument("coverage_intervals: empty input");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (intervals[i].covers(y[i])) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(y.size());
}

double width_regression(const std::vector<PredictionInterval>& intervals, double s_y) {
  if (!(s_y > 0.0)) throw std::invalid_argument("width_regression: s_y must be positive");
  if (intervals.empty()) throw std::invalid_argument("width_regression: empty input");
  double acc = 0.0;
  for (const auto& iv : intervals) acc += iv.width() / s_y;
  return acc / static_cast<double>(intervals.size());
}

double coverage_sets(const std::vector<PredictionSet>& sets, std::span<const int> labels) {
  if (sets.size() != labels.size()) {
    throw std::invalid_argument("coverage_sets: length mismatch");
  }
  if (sets.empty()) throw std::invalid_argument("coverage_sets: empty input");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].contains(labels[i])) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(sets.size());
}

double width_sets(const std::vector<PredictionSet>& sets) {
  if (sets.empty()) throw std::invalid_argument("width_sets: empty input");
  double acc = 0.0;
  for (const auto& s : sets) acc += static_cast<double>(s.size());
  return acc / static_cast<double>(sets.size());
}

double brier(const Matrix& probs, std::span<const int> labels) {
  check_prob_rows(probs, labels);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    for (std::size_t k = 0; k < probs.cols; ++k) {
      const double target = (static_cast<int>(k) == labels[i]) ? 1.0 : 0.0;
      const double d = probs(i, k) - target;
      acc += d * d;
    }
  }
  return acc / static_cast<double>(probs.rows);
}

double ece(const Matrix& probs, std::span<const int> labels, int bins) {
  if (bins < 1) throw std::invalid_argument("ece: bins must be >= 1");
  check_prob_rows(probs, labels);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> correct(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const auto row = probs.row(i);
    const int pred = argmax_row(row);
    const double conf = row[pred];
    int b = static_cast<int>(conf * bins);
    b = std::min(b, bins - 1);
    b = std::max(b, 0);
    conf_sum[b] += conf;
    correct[b] += (pred == labels[i]) ? 1.0 : 0.0;
    ++count[b];
  }
  double e = 0.0;
  const auto n = static_cast<double>(probs.rows);
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const auto nb = static_cast<double>(count[b]);
    e += (nb / n) * std::fabs(correct[b] / nb - conf_sum[b] / nb);
  }
  return e;
}

double accuracy(const Matrix& probs, std::span<const int> labels) {
  check_prob_rows(probs, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    if (argmax_row(probs.row(i)) == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(probs.rows);
}

std::map<std::string, double> fraction_above_line(const std::vector<MethodPoint>& points) {
  if (points.size() < 2) {
    throw std::invalid_argument("fraction_above_line: need at least 2 points");
  }
  Matrix x(points.size(), 2);
  std::vector<double> y(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = points[i].width;
    y[i] = points[i].coverage;
  }
  std::vector<double> beta;
  try {
    beta = ols_fit(x, y);
  } catch (const std::runtime_error&) {
    throw std::invalid_argument("fraction_above_line: all widths identical");
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // above, total
  for (const auto& p : points) {
    auto& t = tally[p.method];
    const double fitted = beta[0] + beta[1] * p.width;
    // 1e-9 slack: points exactly on the line are not "above" it even when
    // the OLS solve reproduces them with float dust.
    if (p.coverage > fitted + 1e-9) ++t.first;
    ++t.second;
  }
  std::map<std::string, double> out;
  for (const auto& [m, t] : tally) {
    out[m] = static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return out;
}

std::map<std::string, double> method_ranks(const std::map<std::string, double>& scores,
                                           RankDirection direction) {
  if (scores.size() < 2) throw std::invalid_argument("method_ranks: need >= 2 methods");
  std::vector<std::pair<std::string, double>> items(scores.begin(), scores.end());
  std::sort(items.begin(), items.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) {
      return direction == RankDirection::higher_better ? a.second > b.second
                                                       : a.second < b.second;
    }
    return a.first < b.first;
  });
  std::map<std::string, double> out;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j + 1 < items.size() && items[j + 1].second == items[i].second) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) out[items[k].first] = avg_rank;
    i = j + 1;
  }
  return out;
}

namespace {

std::string opt_cell(const std::optional<double>& v) {
  return v.has_value() ? fmt_double(*v) : std::string();
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string reports_to_csv(const std::vector<CoverageReport>& reports,
                           const std::string& config_hash) {
  std::string out;
  if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
  out += "method,dataset,shift,severity,alpha,coverage,width,brier,ece,accuracy,n,seed,status\n";
  for (const auto& r : reports) {
    out += r.method + "," + r.dataset + "," + r.shift + "," + std::to_string(r.severity) +
           "," + fmt_double(r.alpha) + "," + fmt_double(r.coverage) + "," +
           fmt_double(r.width) + "," + opt_cell(r.brier) + "," + opt_cell(r.ece) + "," +
           opt_cell(r.accuracy) + "," + std::to_string(r.n) + "," +
           std::to_string(r.seed) + "," + r.status + "\n";
  }
  return out;
}

std::vector<CoverageReport> reports_from_csv(const std::string& text) {
  std::vector<CoverageReport> out;
  std::stringstream ss(text);
  std::string line;
  bool saw_header = false;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line.rfind("method,", 0) != 0) {
        throw std::runtime_error("report CSV: missing header line");
      }
      saw_header = true;
      continue;
    }
    auto f = csv_fields(line);
    if (f.size() != 13) {
      throw std::runtime_error("report CSV: bad field count on line " +
                               std::to_string(lineno));
    }
    CoverageReport r;
    r.method = f[0];
    r.dataset = f[1];
    r.shift = f[2];
    r.severity = std::stoi(f[3]);
    r.alpha = std::stod(f[4]);
    r.coverage = std::stod(f[5]);
    r.width = std::stod(f[6]);
    if (!f[7].empty()) r.brier = std::stod(f[7]);
    if (!f[8].empty()) r.ece = std::stod(f[8]);
    if (!f[9].empty()) r.accuracy = std::stod(f[9]);
    r.n = static_cast<std::size_t>(std::stoull(f[10]));
    r.seed = std::stoull(f[11]);
    r.status = f[12];
    out.push_back(std::move(r));
  }
  if (!saw_header) throw std::runtime_error("report CSV: empty input");
  return out;
}

std::string reports_to_json(const std::vector<CoverageReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j{{"method", r.method},   {"dataset", r.dataset},
                     {"shift", r.shift},     {"severity", r.severity},
                     {"alpha", r.alpha},     {"coverage", r.coverage},
                     {"width", r.width},     {"n", r.n},
                     {"seed", r.seed},       {"status", r.status}};
    j["brier"] = r.brier.has_value() ? nlohmann::json(*r.brier) : nlohmann::json();
    j["ece"] = r.ece.has_value() ? nlohmann::json(*r.ece) : nlohmann::json();
    j["accuracy"] = r.accuracy.has_value() ? nlohmann::json(*r.accuracy) : nlohmann::json();
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace uqcov
