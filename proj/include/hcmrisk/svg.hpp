#pragma once

#include <span>
#include <string>
#include <vector>

namespace hcmrisk::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool step = false;     // right-continuous staircase
  bool dashed = false;
  bool markers = false;  // dots instead of a line
  std::vector<double> band_low;   // optional shaded band, same length as x
  std::vector<double> band_high;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  bool diagonal = false;
};

std::string line_plot(const Axes& axes, std::span<const Series> series);

struct Bars {
  std::string label;
  std::vector<double> heights;  // one per bin
  std::string color;
};
// Overlaid translucent histograms on shared bin edges.
std::string histogram(const Axes& axes, std::span<const double> edges, std::span<const Bars> bars);

struct SwarmLane {
  std::string name;
  std::vector<double> phi;
  std::vector<double> value;  // colour: low (blue) to high (red) after ranking
};
std::string beeswarm(const std::string& title, std::span<const SwarmLane> lanes);

struct Panel {
  std::string title;
  std::vector<double> t;
  std::vector<double> p;
  double slope = 0.0;
  double intercept = 0.0;
};
std::string small_multiples(const std::string& title, std::span<const Panel> panels,
                            std::size_t columns = 4);

// Blue (0) to red (1).
std::string ramp(double u);

}  // namespace hcmrisk::svg
