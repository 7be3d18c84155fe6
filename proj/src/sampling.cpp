#include "safestab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace safestab {

Grid::Grid(const Box<double> & box, int resolution) : box_(box)
{
  if (resolution < 2) throw ConfigurationError("grid resolution must be at least 2");
  const Index n = box.dim();
  spacing_.resize(n);
  first_.resize(static_cast<std::size_t>(n));
  count_.resize(static_cast<std::size_t>(n));
  stride_.resize(static_cast<std::size_t>(n));
  total_ = 1;
  for (Index i = 0; i < n; ++i) {
    const double h = (box.upper[i] - box.lower[i]) / (resolution - 1);
    spacing_[i] = h;
    const auto lo = static_cast<Index>(std::ceil(box.lower[i] / h - 1e-9));
    const auto hi = static_cast<Index>(std::floor(box.upper[i] / h + 1e-9));
    first_[static_cast<std::size_t>(i)] = lo;
    count_[static_cast<std::size_t>(i)] = std::max<Index>(hi - lo + 1, 1);
    stride_[static_cast<std::size_t>(i)] = total_;
    total_ *= count_[static_cast<std::size_t>(i)];
  }
}

Eigen::VectorXd Grid::point(Index linear) const
{
  Eigen::VectorXd x(dim());
  for (Index i = 0; i < dim(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Index k = (linear / stride_[ui]) % count_[ui];
    // Clamp so round-off in k * spacing never leaves the box.
    x[i] = std::clamp(static_cast<double>(first_[ui] + k) * spacing_[i], box_.lower[i], box_.upper[i]);
  }
  return x;
}

Index Grid::neighbor(Index linear, Index axis, int step) const
{
  const auto ua = static_cast<std::size_t>(axis);
  const Index k = (linear / stride_[ua]) % count_[ua];
  const Index next = k + step;
  if (next < 0 || next >= count_[ua]) return -1;
  return linear + step * stride_[ua];
}

std::vector<Eigen::VectorXd> random_points(const Box<double> & box, int count, std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd x(box.dim());
    for (Index i = 0; i < box.dim(); ++i) x[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * unit(rng);
    pts.push_back(std::move(x));
  }
  return pts;
}

std::vector<Eigen::VectorXd> sphere_points(Index dim, double radius, int count, std::uint64_t seed)
{
  std::vector<Eigen::VectorXd> pts;
  for (Index i = 0; i < dim; ++i) {
    for (int s : {1, -1}) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
      x[i] = s * radius;
      pts.push_back(std::move(x));
    }
  }
  if (dim == 2) {
    for (int k = 0; k < count; ++k) {
      const double theta = 2.0 * std::numbers::pi * (k + 0.5) / count;
      pts.push_back(Eigen::Vector2d(radius * std::cos(theta), radius * std::sin(theta)));
    }
    return pts;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd d(dim);
    for (Index i = 0; i < dim; ++i) d[i] = normal(rng);
    const double len = d.norm();
    if (len == 0.0) continue;
    pts.push_back(radius * d / len);
  }
  return pts;
}

namespace {

// Bisection on t -> field(origin + t dir) over [t0, t1] where the sign differs at the ends.
Eigen::VectorXd bisect(const ScalarField & field, const Eigen::VectorXd & origin, const Eigen::VectorXd & dir,
                       double t0, double t1, double tolerance)
{
  double f0 = field(origin + t0 * dir);
  Eigen::VectorXd mid = origin + 0.5 * (t0 + t1) * dir;
  for (int it = 0; it < 200; ++it) {
    const double tm = 0.5 * (t0 + t1);
    mid = origin + tm * dir;
    const double fm = field(mid);
    if (std::abs(fm) <= tolerance) break;
    if ((fm >= 0.0) == (f0 >= 0.0)) {
      t0 = tm;
      f0 = fm;
    } else {
      t1 = tm;
    }
  }
  return mid;
}

}  // namespace

std::vector<Eigen::VectorXd> zero_level_points(const ScalarField & field, const GradientField & gradient,
                                               const Box<double> & box, int resolution, int extra,
                                               std::uint64_t seed, double tolerance)
{
  const Grid grid(box, resolution);
  std::vector<double> values(static_cast<std::size_t>(grid.size()));
  for (Index k = 0; k < grid.size(); ++k) values[static_cast<std::size_t>(k)] = field(grid.point(k));

  std::vector<Eigen::VectorXd> out;
  for (Index k = 0; k < grid.size(); ++k) {
    for (Index axis = 0; axis < grid.dim(); ++axis) {
      const Index j = grid.neighbor(k, axis, +1);
      if (j < 0) continue;
      const double fk = values[static_cast<std::size_t>(k)];
      const double fj = values[static_cast<std::size_t>(j)];
      if ((fk >= 0.0) == (fj >= 0.0)) continue;

      const Index pos = fk >= 0.0 ? k : j;
      const Index neg = fk >= 0.0 ? j : k;
      const Eigen::VectorXd p = grid.point(pos);
      const Eigen::VectorXd q = grid.point(neg);
      const double reach = 2.0 * (q - p).norm();

      const Eigen::VectorXd grad = gradient(p);
      const double gnorm = grad.norm();
      Eigen::VectorXd root;
      if (gnorm > 0.0) {
        const Eigen::VectorXd dir = -grad / gnorm;
        const Eigen::VectorXd far = p + reach * dir;
        if (box.contains(far) && field(far) < 0.0) root = bisect(field, p, dir, 0.0, reach, tolerance);
      }
      if (root.size() == 0) root = bisect(field, p, q - p, 0.0, 1.0, tolerance);
      if (std::abs(field(root)) <= tolerance && box.contains(root)) out.push_back(std::move(root));
    }
  }

  std::mt19937_64 rng(seed);
  for (Eigen::VectorXd x : random_points(box, extra, rng)) {
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      const double fx = field(x);
      if (std::abs(fx) <= tolerance) {
        converged = true;
        break;
      }
      const Eigen::VectorXd g = gradient(x);
      const double gg = g.squaredNorm();
      if (gg == 0.0) break;
      x -= (fx / gg) * g;
    }
    if (converged && box.contains(x)) out.push_back(std::move(x));
  }
  return out;
}

}  // namespace safestab
