#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cdc/particles.hpp"

namespace cdc::cli {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return palette[i % 6];
}

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double W = 640, H = 480, L = 70, R = 20, T = 30, B = 50;

  double px(double x) const { return L + (x - x0) / (x1 - x0) * (W - L - R); }
  double py(double y) const { return H - B - (y - y0) / (y1 - y0) * (H - T - B); }
};

inline void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

inline std::string axes(const Frame& f, const std::string& title, const std::string& xl, const std::string& yl) {
  std::string s;
  s += "<rect x=\"" + num(Frame::L) + "\" y=\"" + num(Frame::T) + "\" width=\"" + num(Frame::W - Frame::L - Frame::R) +
       "\" height=\"" + num(Frame::H - Frame::T - Frame::B) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(Frame::H - Frame::B + 18) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + num(xv) + "</text>\n";
    s += "<text x=\"" + num(Frame::L - 6) + "\" y=\"" + num(f.py(yv) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" +
         num(yv) + "</text>\n";
  }
  s += "<text x=\"" + num(Frame::W / 2) + "\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">" + escape(title) +
       "</text>\n";
  s += "<text x=\"" + num((Frame::L + Frame::W - Frame::R) / 2) + "\" y=\"" + num(Frame::H - 10) +
       "\" font-size=\"12\" text-anchor=\"middle\">" + escape(xl) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num((Frame::T + Frame::H - Frame::B) / 2) +
       "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((Frame::T + Frame::H - Frame::B) / 2) + ")\">" + escape(yl) + "</text>\n";
  return s;
}

inline std::string open_svg() {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"480\" viewBox=\"0 0 640 480\">\n<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
}

}  // namespace detail

/// Line plot with one polyline (and point markers) per series.
inline std::string line_plot_svg(const std::vector<Series>& series, const std::string& title, const std::string& xl,
                                 const std::string& yl) {
  using namespace detail;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Series& s : series)
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k]);
      y1 = std::max(y1, s.y[k]);
    }
  if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0.0;
  pad_range(x0, x1);
  pad_range(y0, y1);
  const Frame f{x0, x1, y0, y1};

  std::string s = open_svg() + axes(f, title, xl, yl);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& se = series[i];
    std::string pts;
    for (std::size_t k = 0; k < se.x.size(); ++k) pts += (k ? " " : "") + num(f.px(se.x[k])) + "," + num(f.py(se.y[k]));
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color(i)) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (std::size_t k = 0; k < se.x.size(); ++k)
      s += "<circle cx=\"" + num(f.px(se.x[k])) + "\" cy=\"" + num(f.py(se.y[k])) + "\" r=\"3\" fill=\"" + color(i) +
           "\"/>\n";
    const double ly = Frame::T + 16 + 16 * static_cast<double>(i);
    s += "<line x1=\"" + num(Frame::W - 150) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(Frame::W - 130) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + color(i) + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(Frame::W - 125) + "\" y=\"" + num(ly + 4) + "\" font-size=\"11\">" + escape(se.label) +
         "</text>\n";
  }
  return s + "</svg>\n";
}

/// Scatter of the first coordinate of every particle in the complex plane.
inline std::string constellation_svg(const ParticleSet& ps, const std::string& title) {
  using namespace detail;
  double r = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) r = std::max({r, std::abs(ps[i][0].real()), std::abs(ps[i][0].imag())});
  if (!(r > 0.0)) r = 1.0;
  r *= 1.1;
  const Frame f{-r, r, -r, r};
  std::string s = open_svg() + axes(f, title, "Re x", "Im x");
  s += "<line x1=\"" + num(f.px(-r)) + "\" y1=\"" + num(f.py(0)) + "\" x2=\"" + num(f.px(r)) + "\" y2=\"" + num(f.py(0)) +
       "\" stroke=\"#bbbbbb\"/>\n";
  s += "<line x1=\"" + num(f.px(0)) + "\" y1=\"" + num(f.py(-r)) + "\" x2=\"" + num(f.px(0)) + "\" y2=\"" + num(f.py(r)) +
       "\" stroke=\"#bbbbbb\"/>\n";
  for (std::size_t i = 0; i < ps.size(); ++i)
    s += "<circle cx=\"" + num(f.px(ps[i][0].real())) + "\" cy=\"" + num(f.py(ps[i][0].imag())) +
         "\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n";
  return s + "</svg>\n";
}

}  // namespace cdc::cli
