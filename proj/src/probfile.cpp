#include "uqcov/probfile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace uqcov {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void parse_metadata(const std::string& line, ProbabilityTable& t, const std::string& path) {
  std::stringstream ss(line.substr(1));  // past the '#'
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("probfile: malformed metadata token '" + token +
                               "' in " + path);
    }
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "method") {
      t.method = value;
    } else if (key == "dataset") {
      t.dataset = value;
    } else if (key == "shift") {
      t.shift = value;
    } else if (key == "severity") {
      t.severity = std::stoi(value);
    } else {
      throw std::runtime_error("probfile: unknown metadata key '" + key + "' in " + path);
    }
  }
}

void softmax_row(std::span<double> row) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

}  // namespace

ProbabilityTable read_probfile(const std::string& path, bool logits) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("probfile: cannot open " + path);

  ProbabilityTable t;
  std::string line;
  std::size_t lineno = 0;

  // Metadata comment line.
  if (!std::getline(in, line)) throw std::runtime_error("probfile: empty file " + path);
  ++lineno;
  if (line.empty() || line[0] != '#') {
    throw std::runtime_error("probfile: missing metadata comment line in " + path);
  }
  parse_metadata(line, t, path);

  // Header: p0..p{K-1},label.
  if (!std::getline(in, line)) {
    throw std::runtime_error("probfile: missing header line in " + path);
  }
  ++lineno;
  const auto header = split_csv(line);
  if (header.size() < 3 || header.back() != "label") {
    throw std::runtime_error("probfile: malformed header in " + path);
  }
  const std::size_t k = header.size() - 1;
  for (std::size_t c = 0; c < k; ++c) {
    if (header[c] != "p" + std::to_string(c)) {
      throw std::runtime_error("probfile: malformed header column '" + header[c] +
                               "' in " + path);
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != k + 1) {
      throw std::runtime_error("probfile: bad field count on row " +
                               std::to_string(lineno) + " in " + path);
    }
    double sum = 0.0;
    std::vector<double> row(k);
    for (std::size_t c = 0; c < k; ++c) {
      try {
        row[c] = std::stod(fields[c]);
      } catch (const std::exception&) {
        throw std::runtime_error("probfile: non-numeric value on row " +
                                 std::to_string(lineno) + " in " + path);
      }
      if (!std::isfinite(row[c]) || (!logits && row[c] < 0.0)) {
        throw std::runtime_error("probfile: invalid probability on row " +
                                 std::to_string(lineno) + " in " + path);
      }
      sum += row[c];
    }
    if (logits) {
      softmax_row(row);
    } else {
      if (std::fabs(sum - 1.0) > 1e-4) {
        throw std::runtime_error("probfile: row " + std::to_string(lineno) +
                                 " sums to " + std::to_string(sum) +
                                 ", outside tolerance, in " + path);
      }
      for (double& v : row) v /= sum;
    }
    int label = 0;
    try {
      label = std::stoi(fields[k]);
    } catch (const std::exception&) {
      throw std::runtime_error("probfile: non-integer label on row " +
                               std::to_string(lineno) + " in " + path);
    }
    if (label < 0 || label >= static_cast<int>(k)) {
      throw std::runtime_error("probfile: label out of range on row " +
                               std::to_string(lineno) + " in " + path);
    }
    values.insert(values.end(), row.begin(), row.end());
    labels.push_back(label);
  }
  if (labels.empty()) throw std::runtime_error("probfile: no data rows in " + path);

  t.probabilities = Matrix(labels.size(), k);
  t.probabilities.data = std::move(values);
  t.labels = std::move(labels);
  return t;
}

void write_probfile(const ProbabilityTable& table, const std::string& path) {
  if (table.size() == 0 || table.num_classes() < 2) {
    throw std::invalid_argument("write_probfile: empty or degenerate table");
  }
  if (table.labels.size() != table.size()) {
    throw std::invalid_argument("write_probfile: label count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_probfile: cannot open " + path);
  out << "# method=" << table.method << " dataset=" << table.dataset
      << " shift=" << table.shift << " severity=" << table.severity << "\n";
  for (std::size_t c = 0; c < table.num_classes(); ++c) {
    out << "p" << c << ",";
  }
  out << "label\n";
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t c = 0; c < table.num_classes(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", table.probabilities(i, c));
      out << buf << ",";
    }
    out << table.labels[i] << "\n";
  }
  if (!out) throw std::runtime_error("write_probfile: write failed for " + path);
}

}  // namespace uqcov
