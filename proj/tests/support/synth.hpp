#pragma once

// Test-only data generators: a procedurally rendered 10-class glyph corpus
// in the 28x28 single-channel layout, an IDX writer for round-trip tests and
// for feeding the shift-study pipeline, and small tabular regression
// generators at UCI-like sizes.

#include <cstdint>
#include <string>

#include "uqcov/datasets.hpp"

namespace uqcov::testsupport {

/// Writes images/labels in the IDX binary layout (bytes = round(255*pixel)).
void write_idx(const ImageDataset& data, const std::string& images_path,
               const std::string& labels_path);

/// 10 glyph classes (circle, bars, plus, cross, corner, tee, diagonal,
/// square, disc) with per-sample jitter in position, scale, rotation,
/// stroke intensity and pixel noise. Learnable to high accuracy by a small
/// convnet; several classes swap or lose identity under 90-degree rotation.
ImageDataset make_glyph_dataset(std::size_t n, std::uint64_t seed);

enum class SynthRegression { friedman, poly, linear };

/// Tabular regression draw with Gaussian observation noise. Sizes and
/// dimensions mimic the mid-size UCI benchmarks.
TabularDataset make_regression_dataset(SynthRegression kind, std::size_t n,
                                       std::uint64_t seed);

/// Writes features plus a trailing `y` column as CSV with a header row.
void write_regression_csv(const TabularDataset& data, const std::string& path);

/// y = 2x + e, e ~ N(0, 0.5^2), x ~ N(0, 1); single feature column.
TabularDataset make_line_dataset(std::size_t n, std::uint64_t seed);

}  // namespace uqcov::testsupport
