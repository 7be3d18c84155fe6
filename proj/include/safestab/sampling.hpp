#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "safestab/core.hpp"

namespace safestab {

/// Deterministic sampling budget used by every sup/inf estimate.
struct SamplingPlan
{
  int grid_resolution = 201;  ///< nodes per axis
  int random_samples = 2000;
  int boundary_samples = 256;
  std::uint64_t seed = 1;
};

/**
 * Regular grid whose nodes sit at integer multiples of the spacing, so the
 * origin (and every axis hyperplane through it) is a node whenever the box
 * contains it. The spacing on axis i is extent_i / (resolution - 1).
 */
class Grid
{
public:
  Grid(const Box<double> & box, int resolution);

  Index dim() const { return static_cast<Index>(first_.size()); }
  Index size() const { return total_; }
  const Eigen::VectorXd & spacing() const { return spacing_; }
  Index count(Index axis) const { return count_[static_cast<std::size_t>(axis)]; }

  Eigen::VectorXd point(Index linear) const;
  /// Linear index of the neighbor one step along `axis` in direction `step` (+1/-1), or -1.
  Index neighbor(Index linear, Index axis, int step) const;

private:
  Box<double> box_;
  std::vector<Index> first_;
  std::vector<Index> count_;
  std::vector<Index> stride_;
  Eigen::VectorXd spacing_;
  Index total_ = 0;
};

std::vector<Eigen::VectorXd> random_points(const Box<double> & box, int count, std::mt19937_64 & rng);

/**
 * Points on the sphere |x| = radius. Always includes the 2n coordinate
 * directions; in the plane the remaining points are evenly spaced in angle,
 * otherwise they are seeded Gaussian directions.
 */
std::vector<Eigen::VectorXd> sphere_points(Index dim, double radius, int count, std::uint64_t seed);

using ScalarField = std::function<double(const Eigen::VectorXd &)>;
using GradientField = std::function<Eigen::VectorXd(const Eigen::VectorXd &)>;

/**
 * Points on the zero level set of a scalar field inside the box.
 *
 * For every grid edge across which the field changes sign, bisects along the
 * normalized gradient from the nonnegative node (falling back to the edge
 * itself when the gradient line does not bracket the root) until
 * |field| <= tolerance. Then `extra` random starts are pushed onto the level
 * set with Newton steps along the gradient.
 */
std::vector<Eigen::VectorXd> zero_level_points(const ScalarField & field, const GradientField & gradient,
                                               const Box<double> & box, int resolution, int extra,
                                               std::uint64_t seed, double tolerance = 1e-10);

}  // namespace safestab
