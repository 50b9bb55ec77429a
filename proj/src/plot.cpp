#include "sybilfl/plot.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace sybilfl::plot {

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 64, kRight = 160, kTop = 40, kBottom = 52;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const Chart& chart) {
  double x_min = 0, x_max = 1;
  bool first = true;
  for (const auto& s : chart.series) {
    for (double x : s.x) {
      if (first) x_min = x_max = x, first = false;
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (x_max <= x_min) x_max = x_min + 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) {
    const double t = (std::clamp(y, chart.y_min, chart.y_max) - chart.y_min) / (chart.y_max - chart.y_min);
    return kTop + (1 - t) * ph;
  };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight, kWidth, kHeight);
  out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  out += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     kLeft + pw / 2, escape(chart.title));

  for (int i = 0; i <= 5; ++i) {
    const double y = chart.y_min + (chart.y_max - chart.y_min) * i / 5.0;
    out += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", kLeft,
                       sy(y), kLeft + pw, sy(y));
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n", kLeft - 6,
                       sy(y) + 4, y);
  }
  for (int i = 0; i <= 5; ++i) {
    const double x = x_min + (x_max - x_min) * i / 5.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:g}</text>\n", sx(x),
                       kTop + ph + 18, std::round(x));
  }
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
                     kLeft, kTop, pw, ph);
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2,
                     kHeight - 12, escape(chart.x_label));
  out += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
      kTop + ph / 2, kTop + ph / 2, escape(chart.y_label));

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    const std::string dash = s.dashed ? " stroke-dasharray=\"6 4\"" : "";
    std::string d;
    bool pen_down = false;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.y[i])) {
        pen_down = false;
        continue;
      }
      d += fmt::format("{}{:.1f},{:.1f} ", pen_down ? "L" : "M", sx(s.x[i]), sy(s.y[i]));
      pen_down = true;
    }
    if (!d.empty()) {
      out += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{}/>\n", d, color, dash);
    }
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    out += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
                       kLeft + pw + 12, ly, kLeft + pw + 36, ly, color, dash);
    out += fmt::format("<text x=\"{}\" y=\"{:.1f}\">{}</text>\n", kLeft + pw + 42, ly + 4, escape(s.name));
  }
  out += "</svg>\n";
  return out;
}

std::string render_images_svg(std::span<const LabeledDataset* const> rows, std::span<const std::string> row_names,
                              std::size_t max_images) {
  constexpr double cell = 3, gap = 6, label_w = 90;
  std::size_t cols = 0, side_h = 1, side_w = 1;
  for (const auto* row : rows) {
    cols = std::max(cols, std::min(max_images, row->size()));
    const auto& s = row->image_shape;
    if (s.size() >= 2) side_h = s[s.size() - 2], side_w = s.back();
    else if (!s.empty()) side_w = s.back();
  }
  const double img_w = cell * static_cast<double>(side_w), img_h = cell * static_cast<double>(side_h);
  const double width = label_w + static_cast<double>(cols) * (img_w + gap) + gap;
  const double height = static_cast<double>(rows.size()) * (img_h + gap) + gap;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
      "font-size=\"12\" shape-rendering=\"crispEdges\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y0 = gap + static_cast<double>(r) * (img_h + gap);
    const std::string name = r < row_names.size() ? row_names[r] : "";
    out += fmt::format("<text x=\"4\" y=\"{:.1f}\">{}</text>\n", y0 + img_h / 2 + 4, escape(name));
    const LabeledDataset& data = *rows[r];
    for (std::size_t i = 0; i < std::min(max_images, data.size()); ++i) {
      const double x0 = label_w + static_cast<double>(i) * (img_w + gap);
      const auto img = data.image(i);
      // first channel only
      for (std::size_t py = 0; py < side_h; ++py) {
        for (std::size_t px = 0; px < side_w; ++px) {
          const std::size_t at = py * side_w + px;
          if (at >= img.size()) break;
          const int g = static_cast<int>(std::lround(255.0 * std::clamp(img[at], 0.0, 1.0)));
          out += fmt::format("<rect x=\"{:.0f}\" y=\"{:.0f}\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"#{:02x}{:02x}{:02x}\"/>\n",
                             x0 + cell * static_cast<double>(px), y0 + cell * static_cast<double>(py), cell, cell,
                             g, g, g);
        }
      }
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace sybilfl::plot
