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

// Minimal deterministic SVG rendering for the benchmark CSV artifacts:
// line charts (tracking error curves, learning curves, state overlays)
// and the gain-sensitivity heatmap. No external plotting dependency; the
// output is a pure function of the input tables.

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace quadbench {

// Loose CSV reader for the benchmark's own artifacts: comma-separated,
// no quoting, first line is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::string& path);
  // Column index by header name, -1 when absent.
  int col(const std::string& name) const;
};

// One polyline of a line chart. NaN entries split the line into
// segments, which renders gaps (e.g. crashed sweep cells).
struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color{"#1f77b4"};
  bool dashed{false};
  bool markers{false};
};

struct ChartOptions {
  double width{640.0}, height{420.0};
  std::string title, x_label, y_label;
};

void render_line_chart(const std::string& path, const ChartOptions& opt,
                       const std::vector<Series>& series);

struct HeatmapOptions {
  double width{640.0}, height{560.0};
  std::string title, x_label, y_label;
  std::vector<std::string> x_ticks, y_ticks;
  // Cells with mask != 0 render as failures instead of values.
  std::string mask_label{"crash"};
};

// values(i, j) maps to column i (x) and row j (y); colors follow
// log-compressed magnitude so decades stay distinguishable.
void render_heatmap(const std::string& path, const HeatmapOptions& opt,
                    const Eigen::MatrixXd& values,
                    const Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>& mask);

}  // namespace quadbench
