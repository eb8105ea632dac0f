#pragma once

#include <string>
#include <vector>

#include "uqcov/numerics.hpp"

namespace uqcov {

/// Externally computed classification probabilities plus labels and the
/// provenance tags carried in the file's comment line.
struct ProbabilityTable {
  Matrix probabilities;     // n x K, each row sums to 1 within 1e-4
  std::vector<int> labels;  // class indices < K
  std::string method;
  std::string dataset;
  std::string shift = "none";
  int severity = 0;

  std::size_t size() const { return probabilities.rows; }
  std::size_t num_classes() const { return probabilities.cols; }
};

/// CSV schema: a leading comment line
///   # method=<m> dataset=<d> shift=<s> severity=<v>
/// then a header `p0,...,p{K-1},label`, then one row per sample. Rows are
/// renormalized when their sum is within 1e-4 of 1, rejected otherwise.
/// With `logits = true` the value columns are pre-softmax scores and a
/// row-wise softmax is applied on load.
ProbabilityTable read_probfile(const std::string& path, bool logits = false);

/// Writes with 17 significant digits so read(write(t)) reproduces the
/// probabilities within 1e-12.
void write_probfile(const ProbabilityTable& table, const std::string& path);

}  // namespace uqcov
