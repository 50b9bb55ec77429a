#pragma once

#include <span>
#include <string>
#include <vector>

#include "sybilfl/data.hpp"

namespace sybilfl::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN leaves a gap
  bool dashed = false;
};

struct Chart {
  std::string title;
  std::string x_label = "round";
  std::string y_label = "accuracy";
  double y_min = 0.0;
  double y_max = 1.0;
  std::vector<Series> series;
};

std::string render_svg(const Chart& chart);

// Grayscale grid: one row per dataset, images side by side.
std::string render_images_svg(std::span<const LabeledDataset* const> rows, std::span<const std::string> row_names,
                              std::size_t max_images = 16);

}  // namespace sybilfl::plot
