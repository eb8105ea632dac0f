#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uqcov/datasets.hpp"

namespace uqcov {

enum class CorruptionKind {
  gaussian_noise,
  impulse_noise,
  gaussian_blur,
  brightness,
  contrast,
  pixelate,
};

CorruptionKind corruption_from_name(const std::string& name);
std::string corruption_name(CorruptionKind kind);

/// Per-kind severity tables (index 0 = severity 1). Values are tool
/// defaults, overridable through the harness config.
struct CorruptionTables {
  std::array<double, 5> gaussian_noise_sigma{0.04, 0.08, 0.12, 0.18, 0.26};
  std::array<double, 5> impulse_noise_fraction{0.01, 0.03, 0.06, 0.10, 0.17};
  std::array<double, 5> gaussian_blur_sigma{0.5, 0.8, 1.2, 1.8, 2.5};
  std::array<double, 5> brightness_delta{0.1, 0.2, 0.3, 0.4, 0.5};
  std::array<double, 5> contrast_scale{0.75, 0.6, 0.45, 0.3, 0.2};
  std::array<int, 5> pixelate_block{2, 3, 4, 5, 7};

  double value(CorruptionKind kind, int severity) const;
};

/// One point of a shift schedule.
struct ShiftSpec {
  enum class Kind { none, rotation, roll_translation, corruption };
  Kind kind = Kind::none;
  double degrees = 0.0;              // rotation
  int pixels = 0;                    // roll_translation
  CorruptionKind corruption = CorruptionKind::gaussian_noise;
  int severity = 0;                  // 1..5 for corruption, else 0

  static ShiftSpec none() { return {}; }
  static ShiftSpec rotation(double deg);
  static ShiftSpec roll(int px);
  static ShiftSpec corrupt(CorruptionKind kind, int severity);

  /// Stable descriptor used in report rows, e.g. "rotation_15", "roll_4",
  /// "gaussian_noise" (severity goes in its own column).
  std::string describe() const;
};

/// Rotate about the image center, inverse-mapping bilinear interpolation,
/// out-of-bounds filled with 0, output clamped to [0,1].
Image rotate(const Image& img, double degrees);

/// Circular horizontal shift to the right by `pixels` (the rightmost column
/// becomes the leftmost). Exact, no interpolation.
Image roll(const Image& img, int pixels);

/// Apply one corruption at severity 1..5. Noise kinds draw from `seed`;
/// fixed seed gives bit-identical output. Result clamped to [0,1].
Image corrupt(const Image& img, CorruptionKind kind, int severity,
              std::uint64_t seed, const CorruptionTables& tables = {});

/// Rotation schedule 15..180 step 15 (the 12 levels of the shift protocol).
std::vector<double> rotation_schedule();
/// Roll schedule step..width in `step` increments (width included; roll by
/// width is the identity).
std::vector<int> roll_schedule(int width, int step);

/// Shift distance of a roll on a cyclic image: d(s) = min(s, width - s).
int roll_shift_distance(int pixels, int width);

/// One shifted copy of the dataset per schedule point, in schedule order.
/// Noise corruptions seed each image as base_seed + image index.
std::vector<std::pair<ShiftSpec, ImageDataset>> shift_sweep(
    const ImageDataset& data, const std::vector<ShiftSpec>& schedule,
    std::uint64_t base_seed = 0, const CorruptionTables& tables = {});

}  // namespace uqcov
