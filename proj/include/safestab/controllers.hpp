#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "safestab/systems.hpp"

namespace safestab {

/// Which certificate inequality is enforced as the hard constraint.
enum class PenaltyMode
{
  SafetyHard,     ///< barrier inequality hard, Lyapunov decrease penalized
  StabilityHard,  ///< Lyapunov decrease hard, barrier inequality penalized
};

template <typename Scalar>
struct PenaltyConfig
{
  PenaltyMode mode = PenaltyMode::SafetyHard;
  Scalar epsilon = Scalar(0.01);
};

/// Soft constraint a + b.u <= 0 and hard constraint c + d.u <= 0 at one state.
template <typename Scalar>
struct ConstraintData
{
  Scalar a;
  VectorX<Scalar> b;
  Scalar c;
  VectorX<Scalar> d;
};

enum class Branch
{
  Interior,
  ProjectedOntoHard,
};

template <typename Scalar>
struct ControlOutput
{
  VectorX<Scalar> u;
  Branch branch;
  Scalar e_value;        ///< switching function c - (1/eps) d.b
  Scalar hard_residual;  ///< c + d.u, nonpositive up to round-off
};

inline const char * to_string(Branch b)
{
  return b == Branch::Interior ? "interior" : "projected";
}

inline const char * to_string(PenaltyMode m)
{
  return m == PenaltyMode::SafetyHard ? "safety_hard" : "stability_hard";
}

/**
 * Minimizer of 1/2 |u|^2 + (a + b.u) / eps subject to c + d.u <= 0.
 *
 * With e = c - (1/eps) d.b the solution is -b/eps when e <= 0, otherwise the
 * projection of -b/eps onto the hyperplane c + d.u = 0.
 */
template <typename Scalar>
ControlOutput<Scalar> penalty_controller(const ConstraintData<Scalar> & data, Scalar epsilon)
{
  if (!(epsilon > Scalar(0))) throw ConfigurationError("penalty parameter must be positive");
  if (data.b.size() != data.d.size()) throw ConfigurationError("b and d must have the same length");

  const VectorX<Scalar> unconstrained = -data.b / epsilon;
  const Scalar e = data.c + data.d.dot(unconstrained);

  ControlOutput<Scalar> out;
  if (e <= Scalar(0)) {
    out.u = unconstrained;
    out.branch = Branch::Interior;
  } else {
    const Scalar dd = data.d.squaredNorm();
    if (!(dd > Scalar(0))) {
      throw SingularConstraintError("hard constraint normal vanishes where the projection is required");
    }
    out.u = unconstrained - (e / dd) * data.d;
    out.branch = Branch::ProjectedOntoHard;
  }
  out.e_value = e;
  out.hard_residual = data.c + data.d.dot(out.u);
  return out;
}

template <typename Scalar>
ConstraintData<Scalar> assemble_constraints(const LieData<Scalar> & lie, PenaltyMode mode)
{
  const Scalar clf_a = lie.lfv + lie.w;
  const Scalar cbf_c = -lie.lfh - lie.alpha_h;
  if (mode == PenaltyMode::SafetyHard) return {clf_a, lie.lgv, cbf_c, -lie.lgh};
  return {cbf_c, -lie.lgh, clf_a, lie.lgv};
}

template <typename Scalar>
ConstraintData<Scalar> assemble_constraints(const Scenario<Scalar> & scenario,
                                            const PenaltyConfig<Scalar> & config,
                                            const VectorX<Scalar> & x)
{
  return assemble_constraints(lie_derivatives(scenario, x), config.mode);
}

/**
 * Closed-loop feedback u_eps(x) for a scenario.
 *
 * In StabilityHard mode the hard-constraint normal L_g V vanishes at the
 * origin, so inside the origin-tolerance ball the feedback returns u = 0.
 */
template <typename Scalar>
ControlOutput<Scalar> penalty_feedback(const Scenario<Scalar> & scenario,
                                       const PenaltyConfig<Scalar> & config,
                                       const VectorX<Scalar> & x)
{
  const ConstraintData<Scalar> data = assemble_constraints(scenario, config, x);
  if (config.mode == PenaltyMode::StabilityHard && x.norm() <= scenario.origin_tolerance()) {
    ControlOutput<Scalar> out;
    out.u = VectorX<Scalar>::Zero(scenario.input_dim());
    out.branch = Branch::Interior;
    out.e_value = data.c - data.d.dot(data.b) / config.epsilon;
    out.hard_residual = data.c;
    return out;
  }
  return penalty_controller(data, config.epsilon);
}

enum class QpActiveSet
{
  None,
  Cbf,
  Clf,
  Both,
};

inline const char * to_string(QpActiveSet s)
{
  switch (s) {
    case QpActiveSet::None: return "none";
    case QpActiveSet::Cbf: return "cbf";
    case QpActiveSet::Clf: return "clf";
    case QpActiveSet::Both: return "both";
  }
  return "?";
}

template <typename Scalar>
struct ClfCbfQpSolution
{
  VectorX<Scalar> u;
  Scalar delta;
  QpActiveSet active;
};

/**
 * Relaxed CLF-CBF quadratic program
 *
 *   min 1/2 |u|^2 + p delta^2
 *   s.t. Lfh + Lgh.u + alpha(h) >= 0,  LfV + LgV.u + W <= delta.
 *
 * Solved by enumerating the four active sets, each with a closed-form KKT
 * solution; the feasible candidate with nonnegative multipliers and least
 * cost wins (ties broken by least |u|).
 */
template <typename Scalar>
ClfCbfQpSolution<Scalar> clf_cbf_qp_controller(const LieData<Scalar> & lie, Scalar p)
{
  using std::abs;
  if (!(p > Scalar(0))) throw ConfigurationError("relaxation weight p must be positive");
  const Scalar hh = lie.lgh.squaredNorm();
  if (!(hh > Scalar(0))) throw SingularConstraintError("L_g h vanishes");

  const Scalar cbf_rhs = lie.lfh + lie.alpha_h;  // CBF: Lgh.u >= -cbf_rhs
  const Scalar clf_lhs = lie.lfv + lie.w;         // CLF: clf_lhs + LgV.u <= delta
  const Scalar vv = lie.lgv.squaredNorm();
  const Scalar vh = lie.lgv.dot(lie.lgh);
  const Scalar inv2p = Scalar(1) / (Scalar(2) * p);
  const Index m = lie.lgv.size();

  // Round-off allowance relative to the magnitude of the terms being summed.
  auto feasible = [&](const VectorX<Scalar> & u, Scalar delta) {
    const Scalar cbf = lie.lgh.dot(u) + cbf_rhs;
    const Scalar clf = clf_lhs + lie.lgv.dot(u) - delta;
    const Scalar cbf_tol = Scalar(1e-12) * (Scalar(1) + abs(cbf_rhs) + lie.lgh.norm() * u.norm());
    const Scalar clf_tol =
        Scalar(1e-12) * (Scalar(1) + abs(clf_lhs) + abs(delta) + lie.lgv.norm() * u.norm());
    return cbf >= -cbf_tol && clf <= clf_tol;
  };

  std::optional<ClfCbfQpSolution<Scalar>> best;
  Scalar best_cost = std::numeric_limits<Scalar>::infinity();
  auto consider = [&](VectorX<Scalar> u, Scalar delta, QpActiveSet set) {
    if (!feasible(u, delta)) return;
    const Scalar cost = Scalar(0.5) * u.squaredNorm() + p * delta * delta;
    const Scalar tie = Scalar(1e-12) * (Scalar(1) + abs(cost));
    if (!best || cost < best_cost - tie ||
        (abs(cost - best_cost) <= tie && u.squaredNorm() < best->u.squaredNorm())) {
      best = ClfCbfQpSolution<Scalar>{std::move(u), delta, set};
      best_cost = cost;
    }
  };

  consider(VectorX<Scalar>::Zero(m), Scalar(0), QpActiveSet::None);

  // CBF active only: u = nu Lgh.
  {
    const Scalar nu = -cbf_rhs / hh;
    if (nu >= Scalar(0)) consider(VectorX<Scalar>(nu * lie.lgh), Scalar(0), QpActiveSet::Cbf);
  }

  // CLF active only: u = -lambda LgV, delta = lambda / (2p).
  {
    const Scalar lambda = clf_lhs / (vv + inv2p);
    if (lambda >= Scalar(0)) {
      consider(VectorX<Scalar>(-lambda * lie.lgv), lambda * inv2p, QpActiveSet::Clf);
    }
  }

  // Both active: u = nu Lgh - lambda LgV with
  //   nu |Lgh|^2 - lambda vh            = -cbf_rhs
  //   nu vh      - lambda (|LgV|^2 + 1/2p) = -clf_lhs
  {
    const Scalar det = -hh * (vv + inv2p) + vh * vh;  // strictly negative
    const Scalar nu = (cbf_rhs * (vv + inv2p) - vh * clf_lhs) / det;
    const Scalar lambda = (vh * cbf_rhs - hh * clf_lhs) / det;
    if (nu >= Scalar(0) && lambda >= Scalar(0)) {
      consider(VectorX<Scalar>(nu * lie.lgh - lambda * lie.lgv), lambda * inv2p, QpActiveSet::Both);
    }
  }

  if (!best) throw InfeasibleError("CLF-CBF QP has no KKT point; barrier certificate is violated");
  return *best;
}

template <typename Scalar>
ClfCbfQpSolution<Scalar> clf_cbf_qp_controller(const Scenario<Scalar> & scenario,
                                               const VectorX<Scalar> & x, Scalar p)
{
  return clf_cbf_qp_controller(lie_derivatives(scenario, x), p);
}

/// Minimally invasive filter: projects u_nom onto {u : Lfh + Lgh.u + alpha(h) >= 0}.
template <typename Scalar>
VectorX<Scalar> safety_filter_controller(const LieData<Scalar> & lie, const VectorX<Scalar> & u_nom)
{
  if (u_nom.size() != lie.lgh.size()) throw ConfigurationError("nominal input has wrong dimension");
  const Scalar residual = lie.lfh + lie.lgh.dot(u_nom) + lie.alpha_h;
  if (residual >= Scalar(0)) return u_nom;
  const Scalar hh = lie.lgh.squaredNorm();
  if (!(hh > Scalar(0))) throw SingularConstraintError("L_g h vanishes where the filter must act");
  return u_nom - (residual / hh) * lie.lgh;
}

template <typename Scalar>
VectorX<Scalar> safety_filter_controller(const Scenario<Scalar> & scenario, const VectorX<Scalar> & x,
                                         const VectorX<Scalar> & u_nom)
{
  return safety_filter_controller(lie_derivatives(scenario, x), u_nom);
}

/**
 * Re-express a scenario around a nominal controller: drift f + g u_nom, with
 * g, V, W, h and alpha unchanged. A feedback v computed on the derived
 * scenario is applied as u = v + u_nom(x).
 */
template <typename Scalar>
Scenario<Scalar> nominal_adaptation(const Scenario<Scalar> & scenario,
                                    std::function<VectorX<Scalar>(const VectorX<Scalar> &)> u_nom)
{
  if (!u_nom) throw ConfigurationError("nominal controller is empty");
  ScenarioDefinition<Scalar> def = scenario.definition();
  def.name = scenario.name() + "+nominal";
  def.dynamics.drift = [f = scenario.dynamics().drift, g = scenario.dynamics().actuation,
                        u_nom = std::move(u_nom)](const VectorX<Scalar> & x) -> VectorX<Scalar> {
    return f(x) + g(x) * u_nom(x);
  };
  return Scenario<Scalar>(std::move(def));
}

}  // namespace safestab
