#include "fedsim/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace fedsim {

namespace {

constexpr double kWidth = 800;
constexpr double kHeight = 480;
constexpr double kLeft = 70;
constexpr double kRight = 200;
constexpr double kTop = 30;
constexpr double kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  if (std::abs(v) >= 1000 || v == std::floor(v))
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_learning_curves(std::span<const Curve> curves, const std::string& x_label,
                                   const std::string& y_label) {
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  for (const auto& c : curves) {
    for (double x : c.x) x_max = std::max(x_max, x);
    for (double y : c.y) {
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + plot_w * x / x_max; };
  auto py = [&](double y) { return kTop + plot_h * (1.0 - (y - y_min) / (y_max - y_min)); };

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "  <rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // axes and ticks
  s << "  <g class=\"axes\" stroke=\"black\" fill=\"none\">\n"
    << "    <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
    << "\" y2=\"" << kTop + plot_h << "\"/>\n"
    << "    <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
    << kTop + plot_h << "\"/>\n"
    << "  </g>\n  <g class=\"ticks\" fill=\"black\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x_max * i / 5.0;
    const double yv = y_min + (y_max - y_min) * i / 5.0;
    s << "    <text x=\"" << num(px(xv)) << "\" y=\"" << num(kTop + plot_h + 18)
      << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n"
      << "    <text x=\"" << num(kLeft - 8) << "\" y=\"" << num(py(yv) + 4)
      << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
  }
  s << "  </g>\n"
    << "  <text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kHeight - 15)
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
    << "  <text x=\"15\" y=\"" << num(kTop + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << num(kTop + plot_h / 2) << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const Curve& c = curves[i];
    const char* color = kPalette[i % std::size(kPalette)];
    s << "  <polyline class=\"curve\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < c.x.size() && k < c.y.size(); ++k)
      s << (k ? " " : "") << num(px(c.x[k])) << ',' << num(py(c.y[k]));
    s << "\"/>\n";
    if (c.marker_x) {
      s << "  <line class=\"cluster-marker\" x1=\"" << num(px(*c.marker_x)) << "\" y1=\"" << kTop
        << "\" x2=\"" << num(px(*c.marker_x)) << "\" y2=\"" << kTop + plot_h << "\" stroke=\""
        << color << "\" stroke-dasharray=\"4 3\"/>\n";
    }
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    s << "  <g class=\"legend\">\n"
      << "    <line x1=\"" << num(kLeft + plot_w + 15) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(kLeft + plot_w + 40) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n"
      << "    <text x=\"" << num(kLeft + plot_w + 46) << "\" y=\"" << num(ly + 4) << "\">"
      << escape(c.label) << "</text>\n  </g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace fedsim
