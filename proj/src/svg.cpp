#include "hcmrisk/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace hcmrisk::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
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
  double left = 70, top = 40, width = 480, height = 360;
  Axes axes;
  double px(double x) const {
    const double span = axes.x_max - axes.x_min;
    return left + (span > 0 ? (x - axes.x_min) / span : 0.5) * width;
  }
  double py(double y) const {
    const double span = axes.y_max - axes.y_min;
    return top + height - (span > 0 ? (y - axes.y_min) / span : 0.5) * height;
  }
};

void open(std::ostringstream& os, double w, double h) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void frame(std::ostringstream& os, const Frame& f) {
  const auto& a = f.axes;
  os << "<text x=\"" << num(f.left + f.width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(a.title) << "</text>\n";
  os << "<rect x=\"" << num(f.left) << "\" y=\"" << num(f.top) << "\" width=\"" << num(f.width)
     << "\" height=\"" << num(f.height) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = a.x_min + (a.x_max - a.x_min) * i / 5.0;
    const double yv = a.y_min + (a.y_max - a.y_min) * i / 5.0;
    os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(f.top + f.height + 16)
       << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    os << "<text x=\"" << num(f.left - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">"
       << tick(yv) << "</text>\n";
  }
  os << "<text x=\"" << num(f.left + f.width / 2) << "\" y=\"" << num(f.top + f.height + 36)
     << "\" text-anchor=\"middle\">" << escape(a.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << num(f.top + f.height / 2)
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(a.y_label) << "</text>\n";
  if (a.diagonal)
    os << "<line x1=\"" << num(f.px(a.x_min)) << "\" y1=\"" << num(f.py(a.y_min)) << "\" x2=\""
       << num(f.px(a.x_max)) << "\" y2=\"" << num(f.py(a.y_max))
       << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
}

void legend(std::ostringstream& os, const Frame& f, const std::vector<std::pair<std::string, std::string>>& items) {
  double y = f.top + 14;
  for (const auto& [label, color] : items) {
    os << "<rect x=\"" << num(f.left + f.width + 12) << "\" y=\"" << num(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
       << color << "\"/>\n<text x=\"" << num(f.left + f.width + 26) << "\" y=\"" << num(y) << "\">"
       << escape(label) << "</text>\n";
    y += 18;
  }
}

}  // namespace

std::string ramp(double u) {
  u = std::clamp(std::isfinite(u) ? u : 0.5, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(40 + 200 * u));
  const int b = static_cast<int>(std::lround(240 - 200 * u));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, 60, b);
  return buf;
}

std::string line_plot(const Axes& axes, std::span<const Series> series) {
  Frame f;
  f.axes = axes;
  std::ostringstream os;
  open(os, f.left + f.width + 190, f.top + f.height + 50);
  frame(os, f);
  std::vector<std::pair<std::string, std::string>> items;
  for (const auto& s : series) {
    if (!s.band_low.empty() && s.band_low.size() == s.x.size() && s.band_high.size() == s.x.size()) {
      os << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) os << num(f.px(s.x[i])) << ',' << num(f.py(s.band_high[i])) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;) os << num(f.px(s.x[i])) << ',' << num(f.py(s.band_low[i])) << ' ';
      os << "\"/>\n";
    }
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        os << "<circle cx=\"" << num(f.px(s.x[i])) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"2.5\" fill=\""
           << s.color << "\"/>\n";
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\""
         << (s.dashed ? " stroke-dasharray=\"6 3\"" : "") << " points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (s.step && i > 0) os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i - 1])) << ' ';
        os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
      }
      os << "\"/>\n";
    }
    if (!s.label.empty()) items.emplace_back(s.label, s.color);
  }
  legend(os, f, items);
  os << "</svg>\n";
  return os.str();
}

std::string histogram(const Axes& axes, std::span<const double> edges, std::span<const Bars> bars) {
  Frame f;
  f.axes = axes;
  std::ostringstream os;
  open(os, f.left + f.width + 190, f.top + f.height + 50);
  frame(os, f);
  std::vector<std::pair<std::string, std::string>> items;
  for (const auto& b : bars) {
    for (std::size_t i = 0; i + 1 < edges.size() && i < b.heights.size(); ++i) {
      const double y0 = f.py(axes.y_min), y1 = f.py(std::min(b.heights[i], axes.y_max));
      os << "<rect x=\"" << num(f.px(edges[i])) << "\" y=\"" << num(y1) << "\" width=\""
         << num(f.px(edges[i + 1]) - f.px(edges[i])) << "\" height=\"" << num(y0 - y1) << "\" fill=\""
         << b.color << "\" fill-opacity=\"0.45\" stroke=\"" << b.color << "\"/>\n";
    }
    items.emplace_back(b.label, b.color);
  }
  legend(os, f, items);
  os << "</svg>\n";
  return os.str();
}

std::string beeswarm(const std::string& title, std::span<const SwarmLane> lanes) {
  double lim = 0.0;
  for (const auto& l : lanes)
    for (double v : l.phi) lim = std::max(lim, std::abs(v));
  if (lim == 0.0) lim = 1.0;
  const double lane_h = 28, left = 190, width = 460, top = 40;
  const double height = lane_h * static_cast<double>(lanes.size());
  std::ostringstream os;
  open(os, left + width + 40, top + height + 50);
  os << "<text x=\"" << num(left + width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(title) << "</text>\n";
  auto px = [&](double v) { return left + (v + lim) / (2 * lim) * width; };
  os << "<line x1=\"" << num(px(0)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(px(0)) << "\" y2=\""
     << num(top + height) << "\" stroke=\"gray\"/>\n";
  for (std::size_t k = 0; k < lanes.size(); ++k) {
    const auto& l = lanes[k];
    const double cy = top + lane_h * (static_cast<double>(k) + 0.5);
    os << "<text x=\"" << num(left - 8) << "\" y=\"" << num(cy + 4) << "\" text-anchor=\"end\">" << escape(l.name)
       << "</text>\n";
    // Colour by rank of the feature value; stack points that share a pixel bin.
    std::vector<std::size_t> order(l.value.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return l.value[a] < l.value[b]; });
    std::vector<double> rank(l.value.size(), 0.5);
    for (std::size_t r = 0; r < order.size(); ++r)
      rank[order[r]] = order.size() > 1 ? static_cast<double>(r) / static_cast<double>(order.size() - 1) : 0.5;
    std::vector<int> occupancy(static_cast<std::size_t>(width / 3) + 2, 0);
    for (std::size_t i = 0; i < l.phi.size(); ++i) {
      const double x = px(l.phi[i]);
      auto& n = occupancy[static_cast<std::size_t>(std::clamp((x - left) / 3.0, 0.0, width / 3.0))];
      const double dy = (n % 2 == 0 ? 1 : -1) * 1.5 * ((n + 1) / 2);
      ++n;
      if (std::abs(dy) > lane_h / 2 - 2) continue;
      os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(cy + dy) << "\" r=\"1.6\" fill=\""
         << ramp(rank[i]) << "\"/>\n";
    }
  }
  os << "<text x=\"" << num(left + width / 2) << "\" y=\"" << num(top + height + 20)
     << "\" text-anchor=\"middle\">SHAP value (" << tick(-lim) << " to " << tick(lim) << ")</text>\n";
  os << "<text x=\"" << num(left + width / 2) << "\" y=\"" << num(top + height + 38)
     << "\" text-anchor=\"middle\">colour: feature value, low (blue) to high (red)</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string small_multiples(const std::string& title, std::span<const Panel> panels, std::size_t columns) {
  columns = std::max<std::size_t>(1, columns);
  const double pw = 200, ph = 150, pad = 30;
  const std::size_t rows = (panels.size() + columns - 1) / columns;
  std::ostringstream os;
  open(os, pad + columns * (pw + pad), 40 + rows * (ph + pad) + pad);
  os << "<text x=\"" << num((pad + columns * (pw + pad)) / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(title) << "</text>\n";
  double smax = 0.0;
  for (const auto& p : panels) smax = std::max(smax, std::abs(p.slope));
  if (smax == 0.0) smax = 1.0;
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const auto& p = panels[k];
    const double x0 = pad + static_cast<double>(k % columns) * (pw + pad);
    const double y0 = 40 + static_cast<double>(k / columns) * (ph + pad);
    const double tmax = p.t.empty() ? 1.0 : std::max(1.0, *std::max_element(p.t.begin(), p.t.end()));
    auto px = [&](double t) { return x0 + t / tmax * pw; };
    auto py = [&](double v) { return y0 + ph - std::clamp(v, 0.0, 1.0) * ph; };
    os << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
       << "\" fill=\"none\" stroke=\"#999\"/>\n";
    os << "<text x=\"" << num(x0 + 4) << "\" y=\"" << num(y0 + 12) << "\" font-size=\"10\">" << escape(p.title)
       << "</text>\n";
    os << "<line x1=\"" << num(px(0)) << "\" y1=\"" << num(py(p.intercept)) << "\" x2=\"" << num(px(tmax))
       << "\" y2=\"" << num(py(p.intercept + p.slope * tmax)) << "\" stroke=\"" << ramp(0.5 + 0.5 * p.slope / smax)
       << "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < p.t.size(); ++i)
      os << "<circle cx=\"" << num(px(p.t[i])) << "\" cy=\"" << num(py(p.p[i])) << "\" r=\"3\" fill=\""
         << ramp(p.p[i]) << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace hcmrisk::svg
