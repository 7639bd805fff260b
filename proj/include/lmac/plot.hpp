#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lmac {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  int width = 640;
  int height = 420;
};

/// Static SVG rendering with axes, ticks, markers and a legend.
std::string render_svg(const LinePlot& plot);
void write_svg(const std::filesystem::path& path, const LinePlot& plot);

}  // namespace lmac
