#include "svg.hpp"

#include <cmath>
#include <cstdio>

namespace safestab::cli {

std::string fixed(double v, int decimals)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
  return s;
}

std::string xml_escape(const std::string & s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<Segment> marching_squares(const std::function<double(const Eigen::Vector2d &)> & field,
                                      const Box<double> & box, int nx, int ny, double level)
{
  if (box.dim() != 2) throw ConfigurationError("marching squares needs a planar box");
  if (nx < 2 || ny < 2) throw ConfigurationError("marching squares needs at least 2 nodes per axis");
  const double hx = (box.upper[0] - box.lower[0]) / (nx - 1);
  const double hy = (box.upper[1] - box.lower[1]) / (ny - 1);
  auto node = [&](int i, int j) { return Eigen::Vector2d(box.lower[0] + i * hx, box.lower[1] + j * hy); };

  std::vector<double> v(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double f = field(node(i, j)) - level;
      v[static_cast<std::size_t>(j) * nx + i] = std::isfinite(f) ? f : 0.0;
    }
  auto at = [&](int i, int j) { return v[static_cast<std::size_t>(j) * nx + i]; };

  // Corners 0..3 = (i,j), (i+1,j), (i+1,j+1), (i,j+1); edge k joins corner k and k+1.
  auto cross = [&](const Eigen::Vector2d & p, const Eigen::Vector2d & q, double fp, double fq) -> Eigen::Vector2d {
    const double t = fp == fq ? 0.5 : fp / (fp - fq);
    return p + t * (q - p);
  };

  std::vector<Segment> out;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const Eigen::Vector2d p[4] = {node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)};
      const double f[4] = {at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
      int mask = 0;
      for (int k = 0; k < 4; ++k)
        if (f[k] >= 0.0) mask |= 1 << k;
      if (mask == 0 || mask == 15) continue;
      auto edge = [&](int k) { return cross(p[k], p[(k + 1) % 4], f[k], f[(k + 1) % 4]); };

      std::vector<int> crossed;
      for (int k = 0; k < 4; ++k) {
        const bool a = f[k] >= 0.0;
        const bool b = f[(k + 1) % 4] >= 0.0;
        if (a != b) crossed.push_back(k);
      }
      if (crossed.size() == 2) {
        out.push_back({edge(crossed[0]), edge(crossed[1])});
      } else {
        const double center = 0.25 * (f[0] + f[1] + f[2] + f[3]);
        const bool c0 = f[0] >= 0.0;
        // When the center agrees with corner 0, corner 0 is connected to corner 2 through the cell.
        if ((center >= 0.0) == c0) {
          out.push_back({edge(0), edge(1)});
          out.push_back({edge(2), edge(3)});
        } else {
          out.push_back({edge(3), edge(0)});
          out.push_back({edge(1), edge(2)});
        }
      }
    }
  }
  return out;
}

PhasePlot::PhasePlot(const Box<double> & region, double width_px) : width_(width_px)
{
  if (region.dim() != 2) throw ConfigurationError("plotting supports planar scenarios only");
  const Eigen::Vector2d lo(region.lower[0], region.lower[1]);
  const Eigen::Vector2d hi(region.upper[0], region.upper[1]);
  const Eigen::Vector2d pad = 0.05 * (hi - lo);
  lo_ = lo - pad;
  hi_ = hi + pad;
  height_ = std::round(width_ * (hi_[1] - lo_[1]) / (hi_[0] - lo_[0]));
}

Eigen::Vector2d PhasePlot::to_px(const Eigen::Vector2d & p) const
{
  return {(p[0] - lo_[0]) / (hi_[0] - lo_[0]) * width_, (hi_[1] - p[1]) / (hi_[1] - lo_[1]) * height_};
}

void PhasePlot::contour(const std::vector<Segment> & segments, const std::string & color, double stroke,
                        const std::string & dash)
{
  if (segments.empty()) return;
  std::string d;
  for (const auto & s : segments) {
    const auto a = to_px(s.a);
    const auto b = to_px(s.b);
    d += "M" + fixed(a[0]) + " " + fixed(a[1]) + "L" + fixed(b[0]) + " " + fixed(b[1]);
  }
  std::string el = "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + fixed(stroke) + "\"";
  if (!dash.empty()) el += " stroke-dasharray=\"" + dash + "\"";
  body_.push_back(el + " stroke-linecap=\"round\"/>");
}

void PhasePlot::polyline(const std::vector<Eigen::Vector2d> & points, const std::string & color)
{
  if (points.empty()) return;
  std::string pts;
  Eigen::Vector2d last;
  bool first = true;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Eigen::Vector2d q = to_px(points[k]);
    const bool keep = first || k + 1 == points.size() || (q - last).norm() >= 0.5;
    if (!keep) continue;
    if (!first) pts += ' ';
    pts += fixed(q[0]) + "," + fixed(q[1]);
    last = q;
    first = false;
  }
  body_.push_back("<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
                  "\" stroke-width=\"1.50\" stroke-linejoin=\"round\"/>");
}

void PhasePlot::start_marker(const Eigen::Vector2d & p, const std::string & color)
{
  const auto q = to_px(p);
  body_.push_back("<circle cx=\"" + fixed(q[0]) + "\" cy=\"" + fixed(q[1]) + "\" r=\"4.00\" fill=\"" + color +
                  "\" stroke=\"black\" stroke-width=\"0.75\"/>");
}

void PhasePlot::end_marker(const Eigen::Vector2d & p, const std::string & color)
{
  const auto q = to_px(p);
  body_.push_back("<rect x=\"" + fixed(q[0] - 3.5) + "\" y=\"" + fixed(q[1] - 3.5) +
                  "\" width=\"7.00\" height=\"7.00\" fill=\"white\" stroke=\"" + color + "\" stroke-width=\"1.50\"/>");
}

void PhasePlot::legend(const std::vector<std::pair<std::string, std::string>> & entries)
{
  double y = 20.0;
  for (const auto & [label, color] : entries) {
    body_.push_back("<line x1=\"12.00\" y1=\"" + fixed(y) + "\" x2=\"36.00\" y2=\"" + fixed(y) + "\" stroke=\"" + color +
                    "\" stroke-width=\"3.00\"/>");
    body_.push_back("<text x=\"42.00\" y=\"" + fixed(y + 4.0) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
                    xml_escape(label) + "</text>");
    y += 18.0;
  }
}

void PhasePlot::title(const std::string & text)
{
  body_.push_back("<text x=\"" + fixed(width_ / 2) + "\" y=\"" + fixed(height_ - 8.0) +
                  "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(text) +
                  "</text>");
}

void PhasePlot::write(std::ostream & os) const
{
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fixed(width_) << "\" height=\""
     << fixed(height_) << "\" viewBox=\"0 0 " << fixed(width_) << " " << fixed(height_) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << fixed(width_) << "\" height=\"" << fixed(height_)
     << "\" fill=\"white\"/>\n";

  // Axes through the origin when it is in view.
  const Eigen::Vector2d o = to_px(Eigen::Vector2d::Zero());
  if (o[0] >= 0 && o[0] <= width_) {
    os << "<line x1=\"" << fixed(o[0]) << "\" y1=\"0.00\" x2=\"" << fixed(o[0]) << "\" y2=\"" << fixed(height_)
       << "\" stroke=\"#bbbbbb\" stroke-width=\"0.75\"/>\n";
  }
  if (o[1] >= 0 && o[1] <= height_) {
    os << "<line x1=\"0.00\" y1=\"" << fixed(o[1]) << "\" x2=\"" << fixed(width_) << "\" y2=\"" << fixed(o[1])
       << "\" stroke=\"#bbbbbb\" stroke-width=\"0.75\"/>\n";
  }
  for (const auto & el : body_) os << el << '\n';
  os << "</svg>\n";
}

}  // namespace safestab::cli
