#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uqcov/numerics.hpp"

namespace uqcov {

/// Tabular regression data. Features may be raw or standardized depending on
/// pipeline stage; labels always stay in original units.
struct TabularDataset {
  Matrix features;       // n x d
  SampleVector labels;   // n
  std::string name;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
};

/// Single- or multi-channel image, pixel values in [0,1], channel-planar
/// layout: pixels[(ch*height + r)*width + c].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, int ch = 1)
      : height(h), width(w), channels(ch),
        pixels(static_cast<std::size_t>(h) * w * ch, 0.0) {}

  double& at(int ch, int r, int c) {
    return pixels[(static_cast<std::size_t>(ch) * height + r) * width + c];
  }
  double at(int ch, int r, int c) const {
    return pixels[(static_cast<std::size_t>(ch) * height + r) * width + c];
  }
};

struct ImageDataset {
  std::vector<Image> images;
  std::vector<int> labels;   // class indices in [0, num_classes)
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return images.size(); }
};

/// Deterministic train/validation/test partition of [0, n).
struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

/// Per-feature affine transform fitted on training rows only, plus the label
/// moments; label_stddev is the s_y used to express interval widths in
/// training-label standard deviations.
struct Standardizer {
  std::vector<double> feature_mean;
  std::vector<double> feature_stddev;
  double label_mean = 0.0;
  double label_stddev = 1.0;
};

/// Load a numeric CSV ('.' decimals, optional single header row). The target
/// column is removed from the features and becomes the labels. Negative
/// indices count from the end (-1 = last column).
TabularDataset load_tabular(const std::string& path, int target_column);
/// Same, selecting the target by header name (the file must have a header).
TabularDataset load_tabular(const std::string& path, const std::string& target_name);

/// Load an IDX image/label file pair (the MNIST binary layout, big-endian).
/// Pixel bytes are scaled to [0,1] by division by 255.
ImageDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Deterministic shuffled partition. Sizes: floor(n*train), floor(n*val),
/// remainder to test (the rule the worked examples pin down).
SplitSpec make_splits(std::size_t n, std::uint64_t seed,
                      double train_fraction, double val_fraction, double test_fraction);

/// Read a split from three index files (one integer per line).
SplitSpec load_split_files(const std::string& train_path, const std::string& val_path,
                           const std::string& test_path, std::size_t n);

/// Fit on training rows (>= 2). Constant features pass through unchanged
/// (mean 0, stddev recorded as 1). Sample statistics use the n-1 denominator.
Standardizer fit_standardizer(const TabularDataset& train);
/// Standardize features; labels are left in original units.
TabularDataset apply_standardizer(const Standardizer& s, const TabularDataset& d);

/// Row subset helper used when materializing splits.
TabularDataset select_rows(const TabularDataset& d, const std::vector<std::size_t>& idx);
ImageDataset select_images(const ImageDataset& d, const std::vector<std::size_t>& idx);

}  // namespace uqcov
