#include "compile/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace compile::plot {

namespace {

constexpr double kWidth = 720, kHeight = 420, kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body << "</svg>\n";
}

std::string axes(const std::string& title, double lo, double hi) {
  std::ostringstream s;
  const double x1 = kWidth - kRight, y1 = kHeight - kBottom;
  s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << y1 << "\" x2=\"" << x1 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = y1 - (y1 - kTop) * i / 4.0;
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << v
      << "</text>\n";
  }
  return s.str();
}

}  // namespace

void line_chart_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series) {
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 1;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) hi = lo + 1;
  const double x1 = kWidth - kRight, y1 = kHeight - kBottom;
  std::ostringstream body;
  body << axes(title, lo, hi);
  body << "<text x=\"" << (kLeft + x1) / 2 << "\" y=\"" << kHeight - 20 << "\" text-anchor=\"middle\">iteration (1.."
       << n << ")</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    body << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    const auto& v = series[k].values;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) continue;
      const double x = kLeft + (x1 - kLeft) * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
      const double y = y1 - (y1 - kTop) * (v[i] - lo) / (hi - lo);
      body << x << ',' << y << ' ';
    }
    body << "\"/>\n";
    const double ly = kTop + 18.0 * static_cast<double>(k);
    body << "<rect x=\"" << x1 + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    body << "<text x=\"" << x1 + 30 << "\" y=\"" << ly + 10 << "\">" << escape(series[k].name) << "</text>\n";
  }
  write(path, body.str());
}

void bar_chart_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Bar>& bars,
                   double y_max) {
  if (!(y_max > 0)) y_max = 1;
  const double x1 = kWidth - kRight, y1 = kHeight - kBottom;
  std::ostringstream body;
  body << axes(title, 0, y_max);
  const double slot = (x1 - kLeft) / static_cast<double>(std::max<std::size_t>(bars.size(), 1));
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::isfinite(bars[i].value) ? std::clamp(bars[i].value, 0.0, y_max) : 0.0;
    const double h = (y1 - kTop) * v / y_max;
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    body << "<rect x=\"" << x << "\" y=\"" << y1 - h << "\" width=\"" << slot * 0.7 << "\" height=\"" << h
         << "\" fill=\"" << kColors[i % std::size(kColors)] << "\"/>\n";
    body << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << y1 - h - 4 << "\" text-anchor=\"middle\">"
         << std::setprecision(3) << bars[i].value << "</text>\n";
    body << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << y1 + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
         << escape(bars[i].label) << "</text>\n";
  }
  write(path, body.str());
}

}  // namespace compile::plot
