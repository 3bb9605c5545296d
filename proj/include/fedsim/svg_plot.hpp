#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedsim {

struct Curve {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::optional<double> marker_x;  // dashed vertical line, e.g. where clustering happened
};

/// Self-contained SVG document with axes, one polyline per curve and a legend.
std::string render_learning_curves(std::span<const Curve> curves, const std::string& x_label,
                                   const std::string& y_label);

}  // namespace fedsim
