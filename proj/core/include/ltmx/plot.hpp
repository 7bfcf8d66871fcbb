#pragma once

#include <string>
#include <vector>

namespace ltmx {

// Static SVG charts for reports.

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one bar per series
};

void write_bar_chart(const std::string& path, const std::string& title, const std::vector<std::string>& series,
                     const std::vector<BarGroup>& groups, double y_max);

struct LineSeries {
  std::string name;
  std::vector<double> y;  // one point per x label
};

void write_line_chart(const std::string& path, const std::string& title, const std::vector<std::string>& x_labels,
                      const std::vector<LineSeries>& series, const std::string& y_label);

}  // namespace ltmx
