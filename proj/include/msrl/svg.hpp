#pragma once

// Minimal standalone SVG charts for experiment outputs.

#include <iosfwd>
#include <string>
#include <vector>

namespace msrl::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 480;
  int height = 360;
};

/// Points drawn as small circles; one color per series.
void scatter(std::ostream& os, const Axes& axes, const std::vector<Series>& series);
/// Polylines, e.g. density estimates against a reference density.
void lines(std::ostream& os, const Axes& axes, const std::vector<Series>& series);
/// Grouped bars: `groups` along the x axis, one bar per series inside each group.
/// Series x values are ignored; y holds one height per group.
void bars(std::ostream& os, const Axes& axes, const std::vector<std::string>& groups,
          const std::vector<Series>& series);

}  // namespace msrl::svg
