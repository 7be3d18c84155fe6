#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "safestab/class_k.hpp"
#include "safestab/core.hpp"

namespace safestab {

/// Differentiable scalar field with an analytic gradient (V, W or h).
template <typename Scalar>
struct ScalarCertificate
{
  std::function<Scalar(const VectorX<Scalar> &)> value;
  std::function<VectorX<Scalar>(const VectorX<Scalar> &)> gradient;

  bool has_gradient() const { return static_cast<bool>(gradient); }
};

/// Control-affine dynamics xdot = f(x) + g(x) u.
template <typename Scalar>
struct SystemDynamics
{
  Index state_dim = 0;
  Index input_dim = 0;
  std::function<VectorX<Scalar>(const VectorX<Scalar> &)> drift;
  std::function<MatrixX<Scalar>(const VectorX<Scalar> &)> actuation;
};

template <typename Scalar>
struct ScenarioDefinition
{
  std::string name;
  SystemDynamics<Scalar> dynamics;
  ScalarCertificate<Scalar> clf;
  ScalarCertificate<Scalar> clf_rate;  // gradient optional, never used
  ScalarCertificate<Scalar> cbf;
  ClassKFunction<Scalar> alpha = ClassKFunction<Scalar>::linear(Scalar(1));
  Box<Scalar> working_region;
  Scalar origin_tolerance = Scalar(1e-6);
};

/// Everything the controllers and the analysis need at one state.
template <typename Scalar>
struct LieData
{
  VectorX<Scalar> f;
  MatrixX<Scalar> g;
  Scalar lfv;
  VectorX<Scalar> lgv;
  Scalar lfh;
  VectorX<Scalar> lgh;
  Scalar v;
  Scalar w;
  Scalar h;
  Scalar alpha_h;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived> & m, const char * field)
{
  if (!m.allFinite()) throw NumericError(field, std::string("non-finite value in ") + field);
}

template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
void require_finite(Scalar s, const char * field)
{
  using std::isfinite;
  if (!isfinite(s)) throw NumericError(field, std::string("non-finite value in ") + field);
}

/// Deterministic validation points: a grid for n <= 3, seeded uniform draws otherwise.
template <typename Scalar>
std::vector<VectorX<Scalar>> validation_points(const Box<Scalar> & box)
{
  const Index n = box.dim();
  std::vector<VectorX<Scalar>> pts;
  if (n <= 3) {
    const int per_axis = 21;
    Index total = 1;
    for (Index i = 0; i < n; ++i) total *= per_axis;
    pts.reserve(static_cast<std::size_t>(total));
    for (Index k = 0; k < total; ++k) {
      VectorX<Scalar> x(n);
      Index rem = k;
      for (Index i = 0; i < n; ++i) {
        const Index j = rem % per_axis;
        rem /= per_axis;
        x[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * Scalar(j) / Scalar(per_axis - 1);
      }
      pts.push_back(std::move(x));
    }
  } else {
    std::mt19937_64 rng(0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < 4096; ++k) {
      VectorX<Scalar> x(n);
      for (Index i = 0; i < n; ++i) {
        x[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * Scalar(unit(rng));
      }
      pts.push_back(std::move(x));
    }
  }
  return pts;
}

}  // namespace detail

/**
 * A validated safe-stabilization problem: dynamics, CLF V with its rate W,
 * CBF h with class-K function alpha, and a compact working region on which
 * all sampled suprema and infima are taken.
 *
 * Construction rejects definitions that violate f(0) = 0, h(0) >= 0, or the
 * nondegeneracy of L_g h on the safe set and of L_g V away from the origin
 * (checked on a deterministic sample of the working region).
 */
template <typename Scalar>
class Scenario
{
public:
  explicit Scenario(ScenarioDefinition<Scalar> def) : def_(std::move(def)) { validate(); }

  const std::string & name() const { return def_.name; }
  const SystemDynamics<Scalar> & dynamics() const { return def_.dynamics; }
  const ScalarCertificate<Scalar> & clf() const { return def_.clf; }
  const ScalarCertificate<Scalar> & clf_rate() const { return def_.clf_rate; }
  const ScalarCertificate<Scalar> & cbf() const { return def_.cbf; }
  const ClassKFunction<Scalar> & alpha() const { return def_.alpha; }
  const Box<Scalar> & working_region() const { return def_.working_region; }
  Scalar origin_tolerance() const { return def_.origin_tolerance; }
  Index state_dim() const { return def_.dynamics.state_dim; }
  Index input_dim() const { return def_.dynamics.input_dim; }
  const ScenarioDefinition<Scalar> & definition() const { return def_; }

private:
  void validate() const;

  ScenarioDefinition<Scalar> def_;
};

/**
 * Lie derivatives of V and h along f and g at x, together with the raw
 * values V(x), W(x), h(x) and alpha(h(x)).
 */
template <typename Scalar>
LieData<Scalar> lie_derivatives(const Scenario<Scalar> & scenario, const VectorX<Scalar> & x)
{
  const Index n = scenario.state_dim();
  const Index m = scenario.input_dim();
  if (x.size() != n) {
    throw ConfigurationError("state has dimension " + std::to_string(x.size()) + ", expected " +
                             std::to_string(n));
  }
  detail::require_finite(x, "state");

  LieData<Scalar> d;
  d.f = scenario.dynamics().drift(x);
  d.g = scenario.dynamics().actuation(x);
  if (d.f.size() != n) throw ConfigurationError("drift returned wrong dimension");
  if (d.g.rows() != n || d.g.cols() != m) throw ConfigurationError("actuation returned wrong shape");
  detail::require_finite(d.f, "drift");
  detail::require_finite(d.g, "actuation");

  const VectorX<Scalar> grad_v = scenario.clf().gradient(x);
  const VectorX<Scalar> grad_h = scenario.cbf().gradient(x);
  if (grad_v.size() != n || grad_h.size() != n) {
    throw ConfigurationError("certificate gradient has wrong dimension");
  }

  d.v = scenario.clf().value(x);
  d.w = scenario.clf_rate().value(x);
  d.h = scenario.cbf().value(x);
  d.alpha_h = scenario.alpha()(d.h);
  d.lfv = grad_v.dot(d.f);
  d.lgv = d.g.transpose() * grad_v;
  d.lfh = grad_h.dot(d.f);
  d.lgh = d.g.transpose() * grad_h;

  detail::require_finite(d.v, "V");
  detail::require_finite(d.w, "W");
  detail::require_finite(d.h, "h");
  detail::require_finite(d.alpha_h, "alpha(h)");
  detail::require_finite(d.lfv, "LfV");
  detail::require_finite(d.lgv, "LgV");
  detail::require_finite(d.lfh, "Lfh");
  detail::require_finite(d.lgh, "Lgh");
  return d;
}

template <typename Scalar>
void Scenario<Scalar>::validate() const
{
  using std::abs;
  const auto & dyn = def_.dynamics;
  const Index n = dyn.state_dim;
  const Index m = dyn.input_dim;
  if (n <= 0 || m <= 0) throw ConfigurationError("state and input dimensions must be positive");
  if (!dyn.drift || !dyn.actuation) throw ConfigurationError("dynamics closures are missing");
  if (!def_.clf.value || !def_.clf.has_gradient()) {
    throw ConfigurationError("CLF needs a value and an analytic gradient");
  }
  if (!def_.cbf.value || !def_.cbf.has_gradient()) {
    throw ConfigurationError("CBF needs a value and an analytic gradient");
  }
  if (!def_.clf_rate.value) throw ConfigurationError("CLF rate W is missing");
  if (!(def_.origin_tolerance > Scalar(0))) {
    throw ConfigurationError("origin tolerance must be positive");
  }

  const auto & box = def_.working_region;
  if (box.lower.size() != n || box.upper.size() != n) {
    throw ConfigurationError("working region dimension does not match the state dimension");
  }
  if (!((box.upper - box.lower).array() > Scalar(0)).all()) {
    throw ConfigurationError("working region must have positive extent on every axis");
  }

  const VectorX<Scalar> origin = VectorX<Scalar>::Zero(n);
  const LieData<Scalar> at_origin = lie_derivatives(*this, origin);
  if (at_origin.f.norm() > Scalar(1e-9)) throw ConfigurationError("drift must vanish at the origin");
  if (abs(at_origin.v) > Scalar(1e-12)) throw ConfigurationError("CLF must vanish at the origin");
  if (at_origin.h < Scalar(0)) throw ConfigurationError("origin must lie in the safe set");

  const Scalar tiny(1e-12);
  for (const auto & x : detail::validation_points(box)) {
    const LieData<Scalar> d = lie_derivatives(*this, x);
    const Scalar radius = x.norm();
    if (radius > def_.origin_tolerance && !(d.v > Scalar(0))) {
      throw ConfigurationError("CLF is not positive at sampled state " +
                               format_vector(x.template cast<double>()));
    }
    if (d.h < Scalar(0)) continue;
    if (!(d.lgh.norm() > tiny)) {
      throw ConfigurationError("L_g h vanishes in the safe set at " +
                               format_vector(x.template cast<double>()));
    }
    if (radius > def_.origin_tolerance && !(d.lgv.norm() > tiny)) {
      throw ConfigurationError("L_g V vanishes away from the origin at " +
                               format_vector(x.template cast<double>()));
    }
  }
}

/**
 * Planar benchmark: f(x) = x, g = I, V = |x|^2 / 2, W = |x|^2,
 * h = x1^2 + (x2 - 4)^2 - 4 (complement of the disk of radius 2 at (0, 4)),
 * alpha(s) = s.
 */
template <typename Scalar = double>
Scenario<Scalar> build_planar_example(Box<Scalar> region = Box<Scalar>::symmetric(2, Scalar(10)))
{
  using Vec = VectorX<Scalar>;
  ScenarioDefinition<Scalar> def;
  def.name = "planar-v1";
  def.dynamics.state_dim = 2;
  def.dynamics.input_dim = 2;
  def.dynamics.drift = [](const Vec & x) -> Vec { return x; };
  def.dynamics.actuation = [](const Vec &) -> MatrixX<Scalar> { return MatrixX<Scalar>::Identity(2, 2); };
  def.clf.value = [](const Vec & x) { return Scalar(0.5) * x.squaredNorm(); };
  def.clf.gradient = [](const Vec & x) -> Vec { return x; };
  def.clf_rate.value = [](const Vec & x) { return x.squaredNorm(); };
  def.clf_rate.gradient = [](const Vec & x) -> Vec { return Scalar(2) * x; };
  def.cbf.value = [](const Vec & x) {
    return x[0] * x[0] + (x[1] - Scalar(4)) * (x[1] - Scalar(4)) - Scalar(4);
  };
  def.cbf.gradient = [](const Vec & x) -> Vec {
    Vec g(2);
    g << Scalar(2) * x[0], Scalar(2) * (x[1] - Scalar(4));
    return g;
  };
  def.alpha = ClassKFunction<Scalar>::linear(Scalar(1));
  def.working_region = std::move(region);
  return Scenario<Scalar>(std::move(def));
}

}  // namespace safestab
