// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/data/image.hpp"

namespace misfit {

struct BarSeries {
  std::string label;
  std::vector<double> values;  // one per group
};

// Static grouped bar chart written as SVG (headless, no renderer needed).
inline void render_grouped_bars_svg(const std::string& path, const std::string& title, const std::string& note,
                                    const std::vector<std::string>& group_labels,
                                    const std::vector<BarSeries>& series) {
  if (series.empty() || group_labels.empty()) throw ValidationError("chart: nothing to draw");
  for (const auto& s : series) {
    if (s.values.size() != group_labels.size()) throw ValidationError("chart: series length mismatch");
  }
  const double width = 720, height = 420;
  const double ml = 70, mr = 20, mt = 50, mb = 70;
  const double plot_w = width - ml - mr;
  const double plot_h = height - mt - mb;

  double vmax = 0.0, vmin = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) {
      vmax = std::max(vmax, v);
      vmin = std::min(vmin, v);
    }
  }
  if (vmax == vmin) vmax = vmin + 1.0;
  vmax *= 1.08;

  auto y_of = [&](double v) { return mt + plot_h * (1.0 - (v - vmin) / (vmax - vmin)); };
  const double y0 = y_of(0.0);

  static const char* palette[] = {"#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};
  const std::size_t n_groups = group_labels.size();
  const std::size_t n_series = series.size();
  const double group_w = plot_w / static_cast<double>(n_groups);
  const double bar_w = group_w * 0.8 / static_cast<double>(n_series);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write chart: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='28' font-size='18' text-anchor='middle' font-family='sans-serif'>"
      << title << "</text>\n";
  if (!note.empty()) {
    out << "<text x='" << width / 2 << "' y='" << height - 12
        << "' font-size='12' text-anchor='middle' fill='#555' font-family='sans-serif'>" << note << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double v = vmin + (vmax - vmin) * t / 5.0;
    const double y = y_of(v);
    out << "<line x1='" << ml << "' y1='" << y << "' x2='" << width - mr << "' y2='" << y
        << "' stroke='#ddd'/>\n";
    char lbl[32];
    std::snprintf(lbl, sizeof(lbl), "%.3g", v);
    out << "<text x='" << ml - 6 << "' y='" << y + 4
        << "' font-size='11' text-anchor='end' font-family='sans-serif'>" << lbl << "</text>\n";
  }
  for (std::size_t g = 0; g < n_groups; ++g) {
    const double gx = ml + group_w * (static_cast<double>(g) + 0.1);
    for (std::size_t s = 0; s < n_series; ++s) {
      const double v = series[s].values[g];
      const double x = gx + bar_w * static_cast<double>(s);
      const double yt = std::min(y_of(v), y0);
      const double hgt = std::abs(y_of(v) - y0);
      out << "<rect x='" << x << "' y='" << yt << "' width='" << bar_w * 0.92 << "' height='" << hgt
          << "' fill='" << palette[s % 6] << "'/>\n";
    }
    out << "<text x='" << ml + group_w * (static_cast<double>(g) + 0.5) << "' y='" << mt + plot_h + 18
        << "' font-size='12' text-anchor='middle' font-family='sans-serif'>" << group_labels[g] << "</text>\n";
  }
  double lx = ml;
  for (std::size_t s = 0; s < n_series; ++s) {
    out << "<rect x='" << lx << "' y='" << mt + plot_h + 32 << "' width='12' height='12' fill='"
        << palette[s % 6] << "'/>\n";
    out << "<text x='" << lx + 16 << "' y='" << mt + plot_h + 42
        << "' font-size='12' font-family='sans-serif'>" << series[s].label << "</text>\n";
    lx += 24 + 8.0 * static_cast<double>(series[s].label.size());
  }
  out << "<line x1='" << ml << "' y1='" << y0 << "' x2='" << width - mr << "' y2='" << y0
      << "' stroke='#333'/>\n";
  out << "</svg>\n";
}

// Dark-to-hot ramp used for attention heatmaps.
inline Image apply_heat_colormap(const Image& gray) {
  if (gray.c != 1) throw ValidationError("colormap expects a single-channel image");
  struct Stop {
    float t, r, g, b;
  };
  static const Stop stops[] = {
      {0.00f, 0.00f, 0.00f, 0.05f}, {0.25f, 0.25f, 0.00f, 0.45f}, {0.50f, 0.75f, 0.10f, 0.25f},
      {0.75f, 0.98f, 0.55f, 0.05f}, {1.00f, 1.00f, 1.00f, 0.85f}};
  Image out(gray.h, gray.w, 3);
  for (int y = 0; y < gray.h; ++y) {
    for (int x = 0; x < gray.w; ++x) {
      const float t = std::clamp(gray.at(y, x, 0), 0.0f, 1.0f);
      int s = 0;
      while (s < 3 && t > stops[s + 1].t) ++s;
      const float f = (t - stops[s].t) / (stops[s + 1].t - stops[s].t);
      out.at(y, x, 0) = stops[s].r + f * (stops[s + 1].r - stops[s].r);
      out.at(y, x, 1) = stops[s].g + f * (stops[s + 1].g - stops[s].g);
      out.at(y, x, 2) = stops[s].b + f * (stops[s + 1].b - stops[s].b);
    }
  }
  return out;
}

}  // namespace misfit
