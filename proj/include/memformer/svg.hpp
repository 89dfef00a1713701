/*
 * Copyright 2026 The Memformer Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Minimal self-contained SVG line charts. The CSV next to each plot is the
// canonical artifact; this is a convenience rendering with no external
// plotting dependency.

#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace memformer {

struct SvgCurve {
  std::string label;
  std::vector<double> y;  // sampled at x = 0, 1, 2, ...
};

inline std::string render_line_chart(const std::vector<SvgCurve>& curves,
                                     const std::string& title,
                                     const std::string& x_label,
                                     const std::string& y_label) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const double width = 640, height = 420;
  const double left = 70, right = 20, top = 44, bottom = 52;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double y_min = 1e300, y_max = -1e300;
  std::size_t max_len = 0;
  for (const SvgCurve& c : curves) {
    max_len = std::max(max_len, c.y.size());
    for (double v : c.y) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (max_len < 2) max_len = 2;
  if (y_min > y_max) { y_min = 0.0; y_max = 1.0; }
  if (y_max - y_min < 1e-12) { y_max += 1.0; y_min -= 1.0; }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  auto px = [&](double x) { return left + plot_w * x / static_cast<double>(max_len - 1); };
  auto py = [&](double y) { return top + plot_h * (y_max - y) / (y_max - y_min); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // frame and ticks
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
  const int y_ticks = 6;
  for (int t = 0; t <= y_ticks; ++t) {
    const double v = y_min + (y_max - y_min) * t / y_ticks;
    const double yy = py(v);
    svg << "<line x1=\"" << left << "\" y1=\"" << yy << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << yy << "\" stroke=\"#ddd\"/>\n";
    std::ostringstream lab;
    lab.precision(3);
    lab << v;
    svg << "<text x=\"" << left - 8 << "\" y=\"" << yy + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << lab.str() << "</text>\n";
  }
  for (std::size_t t = 0; t < max_len; ++t) {
    const double xx = px(static_cast<double>(t));
    svg << "<text x=\"" << xx << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << t << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << x_label << "</text>\n";
  svg << "<text x=\"16\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << top + plot_h / 2 << ")\">" << y_label
      << "</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % (sizeof(kColors) / sizeof(kColors[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curves[c].y.size(); ++i) {
      svg << px(static_cast<double>(i)) << "," << py(curves[c].y[i]) << " ";
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < curves[c].y.size(); ++i) {
      svg << "<circle cx=\"" << px(static_cast<double>(i)) << "\" cy=\""
          << py(curves[c].y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 16 + 16 * static_cast<double>(c);
    svg << "<line x1=\"" << left + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
        << left + plot_w - 126 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w - 120 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << curves[c].label
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace memformer
