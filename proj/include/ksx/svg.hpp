#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ksx/io.hpp"

namespace ksx {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Line chart over fixed axis ranges, one polyline per series with a legend.
// Plain SVG 1.1; coordinates are printed in the same shortest form as the
// CSVs so charts are byte-stable.
inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series, double x_min, double x_max, double y_min,
                              double y_max) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                  "#7f7f7f"};
  const double w = 640, h = 420, left = 60, right = 170, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };
  auto num = [](double v) { return format_number(std::round(v * 100.0) / 100.0); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(left) + "\" y=\"24\" font-size=\"14\">" + title + "</text>\n";
  s += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x_min + (x_max - x_min) * t / 4.0, fy = y_min + (y_max - y_min) * t / 4.0;
    s += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\">" + num(fx) + "</text>\n";
    s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(fy) + 4) + "\" text-anchor=\"end\">" + num(fy) + "</text>\n";
  }
  s += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(h - 10) + "\" text-anchor=\"middle\">" + x_label + "</text>\n";
  s += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num(top + ph / 2) + ")\">" + y_label + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = palette[i % std::size(palette)];
    std::string pts;
    for (const auto& [x, y] : series[i].points) pts += (pts.empty() ? "" : " ") + num(px(x)) + "," + num(py(y));
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(i);
    s += "<line x1=\"" + num(left + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(left + pw + 32) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(left + pw + 38) + "\" y=\"" + num(ly + 4) + "\">" + series[i].name + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace ksx
