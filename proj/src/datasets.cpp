#include "uqcov/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "uqcov/rng.hpp"

namespace uqcov {

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

std::string basename_stem(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

struct CsvBody {
  std::vector<std::string> header;  // empty if headerless
  std::vector<std::vector<double>> rows;
};

CsvBody read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_tabular: cannot open " + path);
  CsvBody body;
  std::string line;
  std::size_t lineno = 0;
  std::size_t ncols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, ',');
    std::vector<double> row(fields.size());
    bool all_numeric = true;
    std::size_t bad_col = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_double(fields[c], row[c])) {
        all_numeric = false;
        bad_col = c;
        break;
      }
    }
    if (!all_numeric) {
      if (body.rows.empty() && body.header.empty()) {
        for (auto& f : fields) body.header.push_back(trim(f));
        ncols = fields.size();
        continue;
      }
      throw std::runtime_error("load_tabular: non-numeric cell at row " +
                               std::to_string(lineno) + ", column " +
                               std::to_string(bad_col + 1) + " in " + path);
    }
    if (ncols == 0) ncols = fields.size();
    if (fields.size() != ncols) {
      throw std::runtime_error("load_tabular: ragged row " + std::to_string(lineno) +
                               " in " + path);
    }
    body.rows.push_back(std::move(row));
  }
  if (body.rows.empty()) throw std::runtime_error("load_tabular: no data rows in " + path);
  return body;
}

TabularDataset assemble(const CsvBody& body, std::size_t target, const std::string& path) {
  const std::size_t n = body.rows.size();
  const std::size_t ncols = body.rows[0].size();
  if (target >= ncols) {
    throw std::runtime_error("load_tabular: target column out of range in " + path);
  }
  TabularDataset d;
  d.name = basename_stem(path);
  d.features = Matrix(n, ncols - 1);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
      if (c == target) {
        d.labels[i] = body.rows[i][c];
      } else {
        d.features(i, k++) = body.rows[i][c];
      }
    }
  }
  return d;
}

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("load_idx: truncated file " + path);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

TabularDataset load_tabular(const std::string& path, int target_column) {
  const CsvBody body = read_csv(path);
  const auto ncols = static_cast<long>(body.rows[0].size());
  long t = target_column;
  if (t < 0) t += ncols;
  if (t < 0 || t >= ncols) {
    throw std::runtime_error("load_tabular: target column index out of range in " + path);
  }
  return assemble(body, static_cast<std::size_t>(t), path);
}

TabularDataset load_tabular(const std::string& path, const std::string& target_name) {
  const CsvBody body = read_csv(path);
  if (body.header.empty()) {
    throw std::runtime_error("load_tabular: target by name requires a header row: " + path);
  }
  const auto it = std::find(body.header.begin(), body.header.end(), target_name);
  if (it == body.header.end()) {
    throw std::runtime_error("load_tabular: target column '" + target_name +
                             "' not found in " + path);
  }
  return assemble(body, static_cast<std::size_t>(it - body.header.begin()), path);
}

ImageDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("load_idx: cannot open " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("load_idx: cannot open " + labels_path);

  const std::uint32_t img_magic = read_be32(imgs, images_path);
  if (img_magic != 0x00000803u) {
    throw std::runtime_error("load_idx: bad image magic in " + images_path);
  }
  const std::uint32_t n_images = read_be32(imgs, images_path);
  const std::uint32_t h = read_be32(imgs, images_path);
  const std::uint32_t w = read_be32(imgs, images_path);

  const std::uint32_t lab_magic = read_be32(labs, labels_path);
  if (lab_magic != 0x00000801u) {
    throw std::runtime_error("load_idx: bad label magic in " + labels_path);
  }
  const std::uint32_t n_labels = read_be32(labs, labels_path);
  if (n_images != n_labels) {
    throw std::runtime_error("load_idx: image/label count mismatch (" +
                             std::to_string(n_images) + " vs " +
                             std::to_string(n_labels) + ")");
  }

  ImageDataset d;
  d.name = basename_stem(images_path);
  d.images.reserve(n_images);
  d.labels.reserve(n_labels);
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw std::runtime_error("load_idx: truncated image data in " + images_path);
    }
    Image im(static_cast<int>(h), static_cast<int>(w), 1);
    for (std::size_t p = 0; p < buf.size(); ++p) {
      im.pixels[p] = static_cast<double>(buf[p]) / 255.0;
    }
    d.images.push_back(std::move(im));
  }
  int max_label = -1;
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    char b;
    if (!labs.get(b)) {
      throw std::runtime_error("load_idx: truncated label data in " + labels_path);
    }
    const int lab = static_cast<unsigned char>(b);
    d.labels.push_back(lab);
    max_label = std::max(max_label, lab);
  }
  d.num_classes = max_label + 1;
  return d;
}

SplitSpec make_splits(std::size_t n, std::uint64_t seed, double train_fraction,
                      double val_fraction, double test_fraction) {
  if (n < 3) throw std::invalid_argument("make_splits: need n >= 3");
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0)) {
    throw std::invalid_argument("make_splits: fractions must be positive");
  }
  if (std::fabs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("make_splits: fractions must sum to 1");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  shuffle(idx, rng);

  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  SplitSpec s;
  s.seed = seed;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

namespace {
std::vector<std::size_t> read_index_file(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_split_files: cannot open " + path);
  std::vector<std::size_t> out;
  long long v;
  while (in >> v) {
    if (v < 0 || static_cast<std::size_t>(v) >= n) {
      throw std::runtime_error("load_split_files: index out of range in " + path);
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}
}  // namespace

SplitSpec load_split_files(const std::string& train_path, const std::string& val_path,
                           const std::string& test_path, std::size_t n) {
  SplitSpec s;
  s.train = read_index_file(train_path, n);
  s.val = read_index_file(val_path, n);
  s.test = read_index_file(test_path, n);
  std::vector<char> seen(n, 0);
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (std::size_t i : *part) {
      if (seen[i]) throw std::runtime_error("load_split_files: duplicate index " + std::to_string(i));
      seen[i] = 1;
    }
  }
  const std::size_t total = s.train.size() + s.val.size() + s.test.size();
  if (total != n) {
    throw std::runtime_error("load_split_files: split does not cover the dataset");
  }
  return s;
}

Standardizer fit_standardizer(const TabularDataset& train) {
  if (train.size() < 2) {
    throw std::invalid_argument("fit_standardizer: need at least 2 training rows");
  }
  const std::size_t n = train.size(), d = train.dim();
  Standardizer s;
  s.feature_mean.assign(d, 0.0);
  s.feature_stddev.assign(d, 1.0);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = train.features(i, j);
    const double sd = sample_stddev(col);
    if (sd < 1e-12) {
      // Constant feature: pass values through unchanged.
      s.feature_mean[j] = 0.0;
      s.feature_stddev[j] = 1.0;
    } else {
      s.feature_mean[j] = mean(col);
      s.feature_stddev[j] = sd;
    }
  }
  s.label_mean = mean(train.labels);
  s.label_stddev = train.labels.size() >= 2 ? sample_stddev(train.labels) : 1.0;
  if (s.label_stddev < 1e-12) s.label_stddev = 1.0;
  return s;
}

TabularDataset apply_standardizer(const Standardizer& s, const TabularDataset& d) {
  if (s.feature_mean.size() != d.dim()) {
    throw std::invalid_argument("apply_standardizer: dimension mismatch");
  }
  TabularDataset out = d;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j) {
      out.features(i, j) = (d.features(i, j) - s.feature_mean[j]) / s.feature_stddev[j];
    }
  }
  return out;
}

TabularDataset select_rows(const TabularDataset& d, const std::vector<std::size_t>& idx) {
  TabularDataset out;
  out.name = d.name;
  out.features = Matrix(idx.size(), d.dim());
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j) out.features(i, j) = d.features(idx[i], j);
    out.labels[i] = d.labels[idx[i]];
  }
  return out;
}

ImageDataset select_images(const ImageDataset& d, const std::vector<std::size_t>& idx) {
  ImageDataset out;
  out.name = d.name;
  out.num_classes = d.num_classes;
  out.images.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    out.images.push_back(d.images[i]);
    out.labels.push_back(d.labels[i]);
  }
  return out;
}

}  // namespace uqcov
