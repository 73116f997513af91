// Copyright 2026 The quadbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace quadbench {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape_text(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

class SvgWriter {
 public:
  SvgWriter(double width, double height) : width_(width), height_(height) {}

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double stroke_width, const std::string& dash = "") {
    body_ << "  <line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
          << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << color << "\" stroke-width=\""
          << fmt(stroke_width) << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double stroke_width, bool dashed) {
    if (pts.size() < 2) return;
    body_ << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
          << fmt(stroke_width) << "\"";
    if (dashed) body_ << " stroke-dasharray=\"6,4\"";
    body_ << " points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ << " ";
      body_ << fmt(pts[i].first) << "," << fmt(pts[i].second);
    }
    body_ << "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none") {
    body_ << "  <rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w)
          << "\" height=\"" << fmt(h) << "\" fill=\"" << fill << "\" stroke=\"" << stroke
          << "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "  <circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"" << fmt(r)
          << "\" fill=\"" << fill << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size,
            const std::string& anchor = "start", const std::string& color = "#222",
            const std::string& transform = "") {
    body_ << "  <text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << fmt(size)
          << "\" font-family=\"Menlo, monospace\" text-anchor=\"" << anchor << "\" fill=\""
          << color << "\"";
    if (!transform.empty()) body_ << " transform=\"" << transform << "\"";
    body_ << ">" << escape_text(s) << "</text>\n";
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write figure: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width_) << "\" height=\""
        << fmt(height_) << "\" viewBox=\"0 0 " << fmt(width_) << " " << fmt(height_) << "\">\n"
        << "  <rect x=\"0\" y=\"0\" width=\"" << fmt(width_) << "\" height=\"" << fmt(height_)
        << "\" fill=\"#ffffff\"/>\n"
        << body_.str() << "</svg>\n";
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

// Rounds a raw interval to a 1/2/5 decade step and returns the tick
// positions covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(hi > lo)) {
    hi = lo + (std::abs(lo) > 0.0 ? std::abs(lo) * 0.1 : 1.0);
    lo = lo - (hi - lo);
  }
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  }
  std::vector<double> ticks;
  double t = std::ceil(lo / step) * step;
  for (; t <= hi + 0.5 * step; t += step) {
    if (std::abs(t) < 1e-12 * step) t = 0.0;
    ticks.push_back(t);
  }
  return ticks;
}

struct Frame {
  double x0, y0, x1, y1;  // plot area in svg coordinates, y grows downward
  double lo_x, hi_x, lo_y, hi_y;

  double px(double x) const { return x0 + (x - lo_x) / (hi_x - lo_x) * (x1 - x0); }
  double py(double y) const { return y1 - (y - lo_y) / (hi_y - lo_y) * (y1 - y0); }
};

void draw_frame(SvgWriter& svg, const Frame& f, const ChartOptions& opt) {
  svg.rect(f.x0, f.y0, f.x1 - f.x0, f.y1 - f.y0, "#fafafa", "#888");
  for (double t : nice_ticks(f.lo_x, f.hi_x, 6)) {
    const double x = f.px(t);
    svg.line(x, f.y1, x, f.y1 + 5.0, "#444", 1.0);
    svg.line(x, f.y0, x, f.y1, "#ddd", 0.5);
    svg.text(x, f.y1 + 18.0, fmt_tick(t), 11.0, "middle");
  }
  for (double t : nice_ticks(f.lo_y, f.hi_y, 6)) {
    const double y = f.py(t);
    svg.line(f.x0 - 5.0, y, f.x0, y, "#444", 1.0);
    svg.line(f.x0, y, f.x1, y, "#ddd", 0.5);
    svg.text(f.x0 - 8.0, y + 4.0, fmt_tick(t), 11.0, "end");
  }
  if (!opt.title.empty()) svg.text((f.x0 + f.x1) / 2.0, f.y0 - 12.0, opt.title, 14.0, "middle");
  if (!opt.x_label.empty())
    svg.text((f.x0 + f.x1) / 2.0, f.y1 + 36.0, opt.x_label, 12.0, "middle");
  if (!opt.y_label.empty())
    svg.text(16.0, (f.y0 + f.y1) / 2.0, opt.y_label, 12.0, "middle", "#222",
             "rotate(-90 16 " + fmt((f.y0 + f.y1) / 2.0) + ")");
}

}  // namespace

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read table: " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (first) {
      table.header = cells;
      first = false;
    } else {
      table.rows.push_back(cells);
    }
  }
  return table;
}

int CsvTable::col(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void render_line_chart(const std::string& path, const ChartOptions& opt,
                       const std::vector<Series>& series) {
  double lo_x = 0.0, hi_x = 1.0, lo_y = 0.0, hi_y = 1.0;
  bool any = false;
  for (const Series& s : series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        lo_x = hi_x = s.x[i];
        lo_y = hi_y = s.y[i];
        any = true;
      } else {
        lo_x = std::min(lo_x, s.x[i]);
        hi_x = std::max(hi_x, s.x[i]);
        lo_y = std::min(lo_y, s.y[i]);
        hi_y = std::max(hi_y, s.y[i]);
      }
    }
  }
  if (!any) throw std::runtime_error("no finite points to plot in " + path);
  const double pad_y = (hi_y - lo_y) > 0.0 ? 0.08 * (hi_y - lo_y) : std::max(1.0, std::abs(hi_y));
  lo_y -= pad_y;
  hi_y += pad_y;
  if (hi_x == lo_x) {
    lo_x -= 1.0;
    hi_x += 1.0;
  }

  SvgWriter svg(opt.width, opt.height);
  Frame f{64.0, 34.0, opt.width - 18.0, opt.height - 48.0, lo_x, hi_x, lo_y, hi_y};
  draw_frame(svg, f, opt);

  for (const Series& s : series) {
    std::vector<std::pair<double, double>> segment;
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const bool ok = std::isfinite(s.x[i]) && std::isfinite(s.y[i]);
      if (ok) {
        segment.emplace_back(f.px(s.x[i]), f.py(s.y[i]));
        if (s.markers) svg.circle(f.px(s.x[i]), f.py(s.y[i]), 2.6, s.color);
      }
      if ((!ok || i + 1 == s.x.size()) && !segment.empty()) {
        svg.polyline(segment, s.color, 1.6, s.dashed);
        segment.clear();
      }
    }
  }

  double ly = f.y0 + 16.0;
  for (const Series& s : series) {
    if (s.label.empty()) continue;
    svg.line(f.x0 + 10.0, ly - 4.0, f.x0 + 34.0, ly - 4.0, s.color, 2.0,
             s.dashed ? "6,4" : "");
    svg.text(f.x0 + 40.0, ly, s.label, 11.0);
    ly += 16.0;
  }
  svg.save(path);
}

namespace {

// Blue -> yellow -> red ramp over t in [0, 1].
std::string ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  double r, g, b;
  if (t < 0.5) {
    const double u = t / 0.5;
    r = 43.0 + u * (253.0 - 43.0);
    g = 90.0 + u * (231.0 - 90.0);
    b = 180.0 + u * (37.0 - 180.0);
  } else {
    const double u = (t - 0.5) / 0.5;
    r = 253.0 + u * (178.0 - 253.0);
    g = 231.0 + u * (24.0 - 231.0);
    b = 37.0 + u * (43.0 - 37.0);
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(r), static_cast<int>(g),
                static_cast<int>(b));
  return buf;
}

}  // namespace

void render_heatmap(const std::string& path, const HeatmapOptions& opt,
                    const Eigen::MatrixXd& values,
                    const Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>& mask) {
  const int nx = static_cast<int>(values.rows());
  const int ny = static_cast<int>(values.cols());
  if (nx == 0 || ny == 0) throw std::runtime_error("empty heatmap for " + path);
  if (static_cast<int>(opt.x_ticks.size()) != nx || static_cast<int>(opt.y_ticks.size()) != ny) {
    throw std::runtime_error("heatmap tick labels do not match the grid for " + path);
  }

  double vmin = 0.0, vmax = 1.0;
  bool any = false;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      if (mask(i, j)) continue;
      const double v = values(i, j);
      if (!any) {
        vmin = vmax = v;
        any = true;
      } else {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    }
  }
  // Log compression keeps sub-centimeter cells distinguishable from the
  // clipped divergent ones.
  const double floor_v = std::max(1e-3, vmin);
  const double span = std::max(1.0, std::log10(std::max(vmax, floor_v * 10.0) / floor_v));

  SvgWriter svg(opt.width, opt.height);
  const double x0 = 86.0, y0 = 40.0;
  const double x1 = opt.width - 24.0, y1 = opt.height - 64.0;
  const double cw = (x1 - x0) / nx, ch = (y1 - y0) / ny;

  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const double cx = x0 + i * cw;
      const double cy = y0 + j * ch;
      std::string fill;
      std::string label;
      if (mask(i, j)) {
        fill = "#3b3b3b";
        label = opt.mask_label;
      } else {
        const double t = std::log10(std::max(values(i, j), floor_v) / floor_v) / span;
        fill = ramp_color(t);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3g", values(i, j));
        label = buf;
      }
      svg.rect(cx, cy, cw, ch, fill, "#ffffff");
      if (nx <= 14) {
        const std::string color = mask(i, j) ? "#ffffff" : "#1a1a1a";
        svg.text(cx + cw / 2.0, cy + ch / 2.0 + 3.0, label, 9.0, "middle", color);
      }
    }
  }
  for (int i = 0; i < nx; ++i) {
    svg.text(x0 + (i + 0.5) * cw, y1 + 16.0, opt.x_ticks[i], 10.0, "middle");
  }
  for (int j = 0; j < ny; ++j) {
    svg.text(x0 - 8.0, y0 + (j + 0.5) * ch + 3.0, opt.y_ticks[j], 10.0, "end");
  }
  if (!opt.title.empty()) svg.text((x0 + x1) / 2.0, y0 - 14.0, opt.title, 14.0, "middle");
  if (!opt.x_label.empty()) svg.text((x0 + x1) / 2.0, y1 + 40.0, opt.x_label, 12.0, "middle");
  if (!opt.y_label.empty())
    svg.text(18.0, (y0 + y1) / 2.0, opt.y_label, 12.0, "middle", "#222",
             "rotate(-90 18 " + fmt((y0 + y1) / 2.0) + ")");
  svg.save(path);
}

}  // namespace quadbench
