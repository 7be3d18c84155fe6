#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "safestab/core.hpp"

namespace safestab {

/// 1/2 z'Hz + q'z with H positive definite.
template <typename Scalar>
struct QuadraticCost
{
  MatrixX<Scalar> hessian;
  VectorX<Scalar> linear;
};

/// normal . z <= bound
template <typename Scalar>
struct AffineInequality
{
  VectorX<Scalar> normal;
  Scalar bound;
};

template <typename Scalar>
struct QpSolution
{
  VectorX<Scalar> z;
  VectorX<Scalar> multipliers;  // one per inequality, zero when inactive
  Scalar cost;
  std::vector<std::size_t> active;
};

/**
 * Exact minimizer of a small strictly convex QP by full active-set
 * enumeration. Each subset of constraints is treated as equalities, the KKT
 * system is solved with a full-pivot LU, and candidates that are primal
 * feasible with nonnegative multipliers are kept. Returns nullopt when no
 * candidate qualifies (infeasible constraint set).
 *
 * Intended as a reference solver for up to three constraints; the cost is
 * 2^k dense solves.
 */
template <typename Scalar>
std::optional<QpSolution<Scalar>> qp_oracle(const QuadraticCost<Scalar> & cost,
                                            const std::vector<AffineInequality<Scalar>> & constraints,
                                            Scalar tolerance = Scalar(1e-10))
{
  using std::abs;
  const Index n = cost.linear.size();
  if (cost.hessian.rows() != n || cost.hessian.cols() != n) {
    throw ConfigurationError("qp_oracle: Hessian shape does not match the linear term");
  }
  const std::size_t k = constraints.size();
  if (k > 16) throw ConfigurationError("qp_oracle: too many constraints for enumeration");
  for (const auto & c : constraints) {
    if (c.normal.size() != n) throw ConfigurationError("qp_oracle: constraint dimension mismatch");
  }

  std::optional<QpSolution<Scalar>> best;
  for (unsigned mask = 0; mask < (1u << k); ++mask) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (1u << i)) active.push_back(i);
    const Index a = static_cast<Index>(active.size());

    MatrixX<Scalar> kkt = MatrixX<Scalar>::Zero(n + a, n + a);
    VectorX<Scalar> rhs(n + a);
    kkt.topLeftCorner(n, n) = cost.hessian;
    rhs.head(n) = -cost.linear;
    for (Index j = 0; j < a; ++j) {
      const auto & c = constraints[active[static_cast<std::size_t>(j)]];
      kkt.block(0, n + j, n, 1) = c.normal;
      kkt.block(n + j, 0, 1, n) = c.normal.transpose();
      rhs[n + j] = c.bound;
    }
    Eigen::FullPivLU<MatrixX<Scalar>> lu(kkt);
    if (!lu.isInvertible()) continue;
    const VectorX<Scalar> sol = lu.solve(rhs);
    const VectorX<Scalar> z = sol.head(n);

    bool ok = true;
    VectorX<Scalar> multipliers = VectorX<Scalar>::Zero(static_cast<Index>(k));
    for (Index j = 0; j < a && ok; ++j) {
      const Scalar lambda = sol[n + j];
      if (lambda < -tolerance * (Scalar(1) + abs(lambda))) ok = false;
      multipliers[static_cast<Index>(active[static_cast<std::size_t>(j)])] = lambda;
    }
    for (std::size_t i = 0; i < k && ok; ++i) {
      const Scalar slack = constraints[i].normal.dot(z) - constraints[i].bound;
      const Scalar scale = Scalar(1) + abs(constraints[i].bound) + constraints[i].normal.norm() * z.norm();
      if (slack > tolerance * scale) ok = false;
    }
    if (!ok) continue;

    const Scalar value = Scalar(0.5) * z.dot(cost.hessian * z) + cost.linear.dot(z);
    if (!best || value < best->cost) {
      best = QpSolution<Scalar>{z, multipliers, value, active};
    }
  }
  return best;
}

}  // namespace safestab
