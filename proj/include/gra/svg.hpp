#pragma once

#include <string>
#include <vector>

#include "gra/eval.hpp"

namespace gra::eval {

struct Series {
  std::string name;
  std::vector<CurvePoint> points;
  bool dashed = false;
  bool markers = false;
};

struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
};

// Self-contained SVG documents; no external fonts, scripts or styles.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, AxisRange x = {}, AxisRange y = {});

// values[row][col]; rows are drawn bottom-up so the first row sits lowest.
std::string svg_heatmap(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<std::string>& col_labels, const std::vector<std::string>& row_labels,
                        const std::vector<std::vector<double>>& values);

// Four panels: diagnosis rate, max IOP, max CDR and treatment rate against
// mean predicted risk per decile; binary panels carry the identity diagonal.
std::string svg_calibration_panels(const CalibrationTable& table);

}  // namespace gra::eval
