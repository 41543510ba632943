#include "gra/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gra::eval {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

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

struct Frame {
  double x0, y0, w, h;  // plot area in pixels
  AxisRange xr, yr;
  double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double y) const { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; }
};

void text(std::ostringstream& o, double x, double y, const std::string& s, const char* anchor = "middle",
          int size = 12, double rotate = 0.0) {
  o << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\"" << size
    << "\" text-anchor=\"" << anchor << "\"";
  if (rotate != 0.0) o << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
  o << '>' << escape(s) << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, const std::string& title, const std::string& xl,
          const std::string& yl) {
  o << "<rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.w) << "\" height=\""
    << num(f.h) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = f.xr.lo + (f.xr.hi - f.xr.lo) * i / 5.0;
    const double fy = f.yr.lo + (f.yr.hi - f.yr.lo) * i / 5.0;
    text(o, f.px(fx), f.y0 + f.h + 16, num(fx), "middle", 10);
    text(o, f.x0 - 6, f.py(fy) + 4, num(fy), "end", 10);
    o << "<line x1=\"" << num(f.px(fx)) << "\" y1=\"" << num(f.y0 + f.h) << "\" x2=\"" << num(f.px(fx))
      << "\" y2=\"" << num(f.y0 + f.h + 4) << "\" stroke=\"#333\"/>\n";
  }
  text(o, f.x0 + f.w / 2, f.y0 - 10, title, "middle", 13);
  text(o, f.x0 + f.w / 2, f.y0 + f.h + 34, xl);
  text(o, f.x0 - 42, f.y0 + f.h / 2, yl, "middle", 12, -90.0);
}

void polyline(std::ostringstream& o, const Frame& f, const std::vector<CurvePoint>& pts, const char* color,
              bool dashed, bool markers) {
  o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"";
  if (dashed) o << " stroke-dasharray=\"6 4\"";
  o << " points=\"";
  for (const auto& p : pts) {
    if (std::isnan(p.x) || std::isnan(p.y)) continue;
    o << num(f.px(p.x)) << ',' << num(f.py(p.y)) << ' ';
  }
  o << "\"/>\n";
  if (markers) {
    for (const auto& p : pts) {
      if (std::isnan(p.x) || std::isnan(p.y)) continue;
      o << "<circle cx=\"" << num(f.px(p.x)) << "\" cy=\"" << num(f.py(p.y)) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    }
  }
}

void legend(std::ostringstream& o, const Frame& f, const std::vector<Series>& series) {
  double y = f.y0 + f.h - 12.0 * static_cast<double>(series.size()) - 4;
  for (std::size_t i = 0; i < series.size(); ++i, y += 14) {
    const char* color = series[i].dashed ? "#777" : kPalette[i % std::size(kPalette)];
    o << "<line x1=\"" << num(f.x0 + f.w - 150) << "\" y1=\"" << num(y - 4) << "\" x2=\"" << num(f.x0 + f.w - 130)
      << "\" y2=\"" << num(y - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    text(o, f.x0 + f.w - 126, y, series[i].name, "start", 10);
  }
}

std::string open_svg(double w, double h) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
    << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return o.str();
}

void draw_chart(std::ostringstream& o, const Frame& f, const std::string& title, const std::string& xl,
                const std::string& yl, const std::vector<Series>& series) {
  axes(o, f, title, xl, yl);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = series[i].dashed ? "#777" : kPalette[i % std::size(kPalette)];
    polyline(o, f, series[i].points, color, series[i].dashed, series[i].markers);
  }
  legend(o, f, series);
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, AxisRange x, AxisRange y) {
  std::ostringstream o;
  o << open_svg(520, 440);
  draw_chart(o, Frame{70, 40, 420, 340, x, y}, title, x_label, y_label, series);
  o << "</svg>\n";
  return o.str();
}

std::string svg_heatmap(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<std::string>& col_labels, const std::vector<std::string>& row_labels,
                        const std::vector<std::vector<double>>& values) {
  const double cell_w = 44, cell_h = 34, x0 = 80, y0 = 50;
  const double w = x0 + cell_w * static_cast<double>(col_labels.size()) + 40;
  const double h = y0 + cell_h * static_cast<double>(row_labels.size()) + 70;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : values) {
    for (double v : row) {
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) hi = lo + 1e-9;
  std::ostringstream o;
  o << open_svg(w, h);
  text(o, w / 2, 24, title, "middle", 14);
  const std::size_t nrows = row_labels.size();
  for (std::size_t r = 0; r < nrows; ++r) {
    const double y = y0 + cell_h * static_cast<double>(nrows - 1 - r);
    text(o, x0 - 8, y + cell_h / 2 + 4, row_labels[r], "end", 11);
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const double v = r < values.size() && c < values[r].size() ? values[r][c] : std::nan("");
      const double t = std::isnan(v) ? 0.0 : (v - lo) / (hi - lo);
      // Cool-to-warm ramp.
      const int red = static_cast<int>(std::lround(60 + 195 * t));
      const int green = static_cast<int>(std::lround(90 + 80 * (1.0 - std::abs(2 * t - 1))));
      const int blue = static_cast<int>(std::lround(220 - 190 * t));
      const double x = x0 + cell_w * static_cast<double>(c);
      o << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell_w) << "\" height=\""
        << num(cell_h) << "\" fill=\"rgb(" << red << ',' << green << ',' << blue << ")\" stroke=\"white\"/>\n";
      if (!std::isnan(v)) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.3f", v);
        text(o, x + cell_w / 2, y + cell_h / 2 + 4, buf, "middle", 9);
      }
    }
  }
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    text(o, x0 + cell_w * (static_cast<double>(c) + 0.5), y0 + cell_h * static_cast<double>(nrows) + 16,
         col_labels[c], "middle", 11);
  }
  text(o, x0 + cell_w * static_cast<double>(col_labels.size()) / 2, h - 16, x_label);
  text(o, 18, y0 + cell_h * static_cast<double>(nrows) / 2, y_label, "middle", 12, -90.0);
  o << "</svg>\n";
  return o.str();
}

std::string svg_calibration_panels(const CalibrationTable& table) {
  auto channel = [&](auto get) {
    std::vector<CurvePoint> pts;
    for (const auto& b : table.buckets) pts.push_back({b.mean_predicted, get(b)});
    return pts;
  };
  double max_pred = 0.0;
  for (const auto& b : table.buckets) max_pred = std::max(max_pred, b.mean_predicted);
  const AxisRange xr{0.0, std::max(0.1, std::ceil(max_pred * 10.0) / 10.0)};
  const std::vector<CurvePoint> diagonal = {{0.0, 0.0}, {xr.hi, xr.hi}};

  auto range_of = [](const std::vector<CurvePoint>& pts, double pad) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : pts) {
      if (std::isnan(p.y)) continue;
      lo = std::min(lo, p.y);
      hi = std::max(hi, p.y);
    }
    if (!std::isfinite(lo)) return AxisRange{0.0, 1.0};
    return AxisRange{lo - pad, hi + pad};
  };

  const auto dx = channel([](const auto& b) { return b.dx_rate; });
  const auto iop = channel([](const auto& b) { return b.mean_max_iop; });
  const auto cdr = channel([](const auto& b) { return b.mean_max_cdr; });
  const auto tx = channel([](const auto& b) { return b.tx_rate; });

  std::ostringstream o;
  o << open_svg(1040, 880);
  draw_chart(o, Frame{70, 40, 420, 340, xr, {0.0, 1.0}}, "A. Observed glaucoma rate", "Mean predicted risk",
             "Observed rate", {{"decile", dx, false, true}, {"perfect calibration", diagonal, true, false}});
  draw_chart(o, Frame{590, 40, 420, 340, xr, range_of(iop, 0.5)}, "B. Maximum IOP", "Mean predicted risk",
             "Mean max IOP (mmHg)", {{"decile", iop, false, true}});
  draw_chart(o, Frame{70, 480, 420, 340, xr, range_of(cdr, 0.02)}, "C. Maximum cup-to-disc ratio",
             "Mean predicted risk", "Mean max CDR", {{"decile", cdr, false, true}});
  draw_chart(o, Frame{590, 480, 420, 340, xr, {0.0, 1.0}}, "D. Any glaucoma treatment", "Mean predicted risk",
             "Observed rate", {{"decile", tx, false, true}, {"perfect calibration", diagonal, true, false}});
  o << "</svg>\n";
  return o.str();
}

}  // namespace gra::eval
