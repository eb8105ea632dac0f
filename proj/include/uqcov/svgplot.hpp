#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace uqcov {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y) in data units
  bool draw_line = false;
  bool draw_markers = true;
};

/// Deterministic scatter/line plot writer: fixed canvas, fixed palette,
/// fixed number formatting, so identical inputs give byte-identical SVG.
struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  std::optional<double> reference_y;  // horizontal dashed line

  std::string render(int width = 640, int height = 440) const;
};

}  // namespace uqcov
