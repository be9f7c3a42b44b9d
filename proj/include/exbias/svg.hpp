#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace exbias {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN points are skipped
};

/// Minimal line plot: frame, min/max tick labels, one polyline per series
/// and a legend.
void write_line_plot(std::ostream& out, const std::string& title, const std::string& x_label,
                     const std::vector<Series>& series);

}  // namespace exbias
