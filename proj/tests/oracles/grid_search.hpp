#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>

namespace oracle {

struct GridMinimum
{
  Eigen::VectorXd z;
  double value = std::numeric_limits<double>::infinity();
};

/**
 * Brute-force minimum of `cost` over the feasible nodes of a box grid,
 * refined by repeatedly shrinking the box around the incumbent.
 */
inline GridMinimum grid_search(const std::function<double(const Eigen::VectorXd &)> & cost,
                               const std::function<bool(const Eigen::VectorXd &)> & feasible,
                               Eigen::VectorXd lower, Eigen::VectorXd upper, int per_axis = 41, int rounds = 30)
{
  const Eigen::Index n = lower.size();
  GridMinimum best;
  for (int round = 0; round < rounds; ++round) {
    Eigen::Index total = 1;
    for (Eigen::Index i = 0; i < n; ++i) total *= per_axis;
    for (Eigen::Index k = 0; k < total; ++k) {
      Eigen::VectorXd z(n);
      Eigen::Index rem = k;
      for (Eigen::Index i = 0; i < n; ++i) {
        z[i] = lower[i] + (upper[i] - lower[i]) * static_cast<double>(rem % per_axis) / (per_axis - 1);
        rem /= per_axis;
      }
      if (!feasible(z)) continue;
      const double v = cost(z);
      if (v < best.value) best = {z, v};
    }
    if (best.z.size() == 0) break;
    const Eigen::VectorXd half = 2.0 * (upper - lower) / (per_axis - 1);
    lower = best.z - half;
    upper = best.z + half;
  }
  return best;
}

}  // namespace oracle
