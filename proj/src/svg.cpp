#include "msrl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace msrl::svg {

namespace {

constexpr int kMargin = 48;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
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
  double x0, x1, y0, y1;
  int w, h;

  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (w - 2 * kMargin); }
  double py(double y) const { return h - kMargin - (y - y0) / (y1 - y0) * (h - 2 * kMargin); }
};

Frame frame_for(const Axes& axes, const std::vector<Series>& series, bool zero_floor) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double v : s.x)
      if (std::isfinite(v)) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (zero_floor) y0 = std::min(y0, 0.0);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.04 * (y1 - y0);
  return {x0, x1, zero_floor ? y0 : y0 - pad, y1 + pad, axes.width, axes.height};
}

void header(std::ostream& os, const Axes& a, const Frame& f, bool x_ticks) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << a.width << "\" height=\"" << a.height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << a.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(a.title)
     << "</text>\n";
  os << "<line x1=\"" << kMargin << "\" y1=\"" << a.height - kMargin << "\" x2=\"" << a.width - kMargin << "\" y2=\""
     << a.height - kMargin << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\"" << a.height - kMargin
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << kMargin - 4 << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
       << "</text>\n";
    if (!x_ticks) continue;
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << a.height - kMargin + 14 << "\" text-anchor=\"middle\">"
       << num(xv) << "</text>\n";
  }
  os << "<text x=\"" << a.width / 2 << "\" y=\"" << a.height - 10 << "\" text-anchor=\"middle\">"
     << escape(a.x_label) << "</text>\n";
  os << "<text x=\"12\" y=\"" << a.height / 2 << "\" transform=\"rotate(-90 12 " << a.height / 2
     << ")\" text-anchor=\"middle\">" << escape(a.y_label) << "</text>\n";
}

void legend(std::ostream& os, const Axes& a, const std::vector<Series>& series) {
  int y = kMargin;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    os << "<rect x=\"" << a.width - kMargin - 90 << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\""
       << s.color << "\"/>";
    os << "<text x=\"" << a.width - kMargin - 76 << "\" y=\"" << y + 1 << "\">" << escape(s.label) << "</text>\n";
    y += 14;
  }
}

}  // namespace

void scatter(std::ostream& os, const Axes& axes, const std::vector<Series>& series) {
  const Frame f = frame_for(axes, series, false);
  header(os, axes, f, true);
  for (const auto& s : series) {
    os << "<g fill=\"" << s.color << "\" fill-opacity=\"0.5\">\n";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << "<circle cx=\"" << num(f.px(s.x[i])) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"1.6\"/>\n";
    }
    os << "</g>\n";
  }
  legend(os, axes, series);
  os << "</svg>\n";
}

void lines(std::ostream& os, const Axes& axes, const std::vector<Series>& series) {
  const Frame f = frame_for(axes, series, true);
  header(os, axes, f, true);
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
    os << "\"/>\n";
  }
  legend(os, axes, series);
  os << "</svg>\n";
}

void bars(std::ostream& os, const Axes& axes, const std::vector<std::string>& groups,
          const std::vector<Series>& series) {
  std::vector<Series> ys = series;
  for (auto& s : ys) s.x.assign(s.y.size(), 0.0);
  Frame f = frame_for(axes, ys, true);
  f.x0 = 0;
  f.x1 = static_cast<double>(std::max<std::size_t>(groups.size(), 1));
  header(os, axes, f, false);
  const double slot = 1.0 / static_cast<double>(series.size() + 1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (g >= series[k].y.size() || !std::isfinite(series[k].y[g])) continue;
      const double left = f.px(static_cast<double>(g) + slot * (static_cast<double>(k) + 0.5));
      const double right = f.px(static_cast<double>(g) + slot * (static_cast<double>(k) + 1.5));
      const double top = f.py(std::max(series[k].y[g], 0.0)), base = f.py(std::max(f.y0, std::min(0.0, series[k].y[g])));
      os << "<rect x=\"" << num(left) << "\" y=\"" << num(std::min(top, base)) << "\" width=\"" << num(right - left)
         << "\" height=\"" << num(std::abs(base - top)) << "\" fill=\"" << series[k].color << "\"/>\n";
    }
    os << "<text x=\"" << num(f.px(static_cast<double>(g) + 0.5)) << "\" y=\"" << axes.height - kMargin + 14
       << "\" text-anchor=\"middle\">" << escape(groups[g]) << "</text>\n";
  }
  legend(os, axes, series);
  os << "</svg>\n";
}

}  // namespace msrl::svg
