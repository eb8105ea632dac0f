#include "uqcov/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace uqcov {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"};
constexpr int kPaletteSize = 10;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string SvgPlot::render(int width, int height) const {
  const double ml = 62, mr = 18, mt = 30, mb = 46;
  const double plot_w = width - ml - mr;
  const double plot_h = height - mt - mb;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (reference_y && std::isfinite(y_min)) {
    y_min = std::min(y_min, *reference_y);
    y_max = std::max(y_max, *reference_y);
  }
  if (!std::isfinite(x_min)) {
    x_min = 0.0;
    x_max = 1.0;
    y_min = 0.0;
    y_max = 1.0;
  }
  if (x_max == x_min) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  if (y_max == y_min) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  // 5% breathing room.
  const double xpad = 0.05 * (x_max - x_min), ypad = 0.05 * (y_max - y_min);
  x_min -= xpad;
  x_max += xpad;
  y_min -= ypad;
  y_max += ypad;

  const auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * plot_w; };
  const auto py = [&](double y) { return mt + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    svg += "<text x=\"" + fmt(width / 2.0) +
           "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" +
           escape_xml(title) + "</text>\n";
  }

  // Axes.
  svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) +
         "\" y2=\"" + fmt(mt + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt + plot_h) + "\" x2=\"" +
         fmt(ml + plot_w) + "\" y2=\"" + fmt(mt + plot_h) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x_min + (x_max - x_min) * t / 4.0;
    const double fy = y_min + (y_max - y_min) * t / 4.0;
    svg += "<line x1=\"" + fmt(px(fx)) + "\" y1=\"" + fmt(mt + plot_h) + "\" x2=\"" +
           fmt(px(fx)) + "\" y2=\"" + fmt(mt + plot_h + 4) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(mt + plot_h + 17) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
           fmt_tick(fx) + "</text>\n";
    svg += "<line x1=\"" + fmt(ml - 4) + "\" y1=\"" + fmt(py(fy)) + "\" x2=\"" + fmt(ml) +
           "\" y2=\"" + fmt(py(fy)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(ml - 7) + "\" y=\"" + fmt(py(fy) + 3.5) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
           fmt_tick(fy) + "</text>\n";
  }
  if (!x_label.empty()) {
    svg += "<text x=\"" + fmt(ml + plot_w / 2.0) + "\" y=\"" + fmt(height - 8.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape_xml(x_label) + "</text>\n";
  }
  if (!y_label.empty()) {
    svg += "<text x=\"14\" y=\"" + fmt(mt + plot_h / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 14 " +
           fmt(mt + plot_h / 2.0) + ")\">" + escape_xml(y_label) + "</text>\n";
  }

  if (reference_y) {
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(py(*reference_y)) + "\" x2=\"" +
           fmt(ml + plot_w) + "\" y2=\"" + fmt(py(*reference_y)) +
           "\" stroke=\"#555555\" stroke-dasharray=\"5,4\"/>\n";
  }

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string color = kPalette[si % kPaletteSize];
    if (s.draw_line && s.points.size() > 1) {
      std::string pts;
      for (const auto& [x, y] : s.points) {
        if (!pts.empty()) pts += " ";
        pts += fmt(px(x)) + "," + fmt(py(y));
      }
      svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1.5\"/>\n";
    }
    if (s.draw_markers) {
      for (const auto& [x, y] : s.points) {
        svg += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) +
               "\" r=\"3\" fill=\"" + color + "\" fill-opacity=\"0.8\"/>\n";
      }
    }
    // Legend entry.
    const double ly = mt + 14.0 * static_cast<double>(si) + 6.0;
    svg += "<rect x=\"" + fmt(ml + plot_w - 110) + "\" y=\"" + fmt(ly - 5) +
           "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    svg += "<text x=\"" + fmt(ml + plot_w - 96) + "\" y=\"" + fmt(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + escape_xml(s.label) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace uqcov
