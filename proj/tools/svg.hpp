#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "safestab/core.hpp"

namespace safestab::cli {

struct Segment
{
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

/// Level-set segments of a planar field on an nx-by-ny node grid over the box.
/// Saddle cells are split according to the value at the cell center.
std::vector<Segment> marching_squares(const std::function<double(const Eigen::Vector2d &)> & field,
                                      const Box<double> & box, int nx, int ny, double level = 0.0);

/// Hand-rolled SVG 1.1 phase portrait. Output depends only on what was added.
class PhasePlot
{
public:
  explicit PhasePlot(const Box<double> & region, double width_px = 800.0);

  void contour(const std::vector<Segment> & segments, const std::string & color, double stroke,
               const std::string & dash = "");
  void polyline(const std::vector<Eigen::Vector2d> & points, const std::string & color);
  void start_marker(const Eigen::Vector2d & p, const std::string & color);
  void end_marker(const Eigen::Vector2d & p, const std::string & color);
  void legend(const std::vector<std::pair<std::string, std::string>> & entries);
  void title(const std::string & text);

  void write(std::ostream & os) const;

private:
  Eigen::Vector2d to_px(const Eigen::Vector2d & p) const;

  Eigen::Vector2d lo_;
  Eigen::Vector2d hi_;
  double width_;
  double height_;
  std::vector<std::string> body_;
};

std::string fixed(double v, int decimals = 2);
std::string xml_escape(const std::string & s);

}  // namespace safestab::cli
