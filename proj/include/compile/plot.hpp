#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace compile::plot {

struct Series {
  std::string name;
  std::vector<double> values;  // x = 1..n
};

struct Bar {
  std::string label;
  double value = 0;
};

// Standalone SVG files; non-finite values are skipped.
void line_chart_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series);
void bar_chart_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Bar>& bars,
                   double y_max);

}  // namespace compile::plot
