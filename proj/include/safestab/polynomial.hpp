#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "safestab/systems.hpp"

namespace safestab {

template <typename Scalar>
struct Monomial
{
  Scalar coefficient;
  std::vector<int> exponents;
};

/// Sparse multivariate polynomial with analytic gradient.
template <typename Scalar>
class Polynomial
{
public:
  Polynomial() = default;

  Polynomial(Index dim, std::vector<Monomial<Scalar>> terms) : dim_(dim), terms_(std::move(terms))
  {
    for (const auto & t : terms_) {
      if (static_cast<Index>(t.exponents.size()) != dim_) {
        throw ConfigurationError("monomial exponent list has wrong length");
      }
      for (int e : t.exponents) {
        if (e < 0) throw ConfigurationError("monomial exponents must be nonnegative");
      }
    }
  }

  static Polynomial constant(Index dim, Scalar c)
  {
    return Polynomial(dim, {Monomial<Scalar>{c, std::vector<int>(static_cast<std::size_t>(dim), 0)}});
  }

  Index dim() const { return dim_; }
  const std::vector<Monomial<Scalar>> & terms() const { return terms_; }

  Scalar operator()(const VectorX<Scalar> & x) const
  {
    Scalar sum(0);
    for (const auto & t : terms_) sum += t.coefficient * monomial(x, t.exponents, -1);
    return sum;
  }

  VectorX<Scalar> gradient(const VectorX<Scalar> & x) const
  {
    VectorX<Scalar> g = VectorX<Scalar>::Zero(dim_);
    for (const auto & t : terms_) {
      for (Index i = 0; i < dim_; ++i) {
        const int e = t.exponents[static_cast<std::size_t>(i)];
        if (e == 0) continue;
        g[i] += t.coefficient * Scalar(e) * monomial(x, t.exponents, i);
      }
    }
    return g;
  }

private:
  // Product of x_j^e_j, with the exponent of coordinate `lowered` reduced by one.
  static Scalar monomial(const VectorX<Scalar> & x, const std::vector<int> & exps, Index lowered)
  {
    using std::pow;
    Scalar p(1);
    for (Index j = 0; j < x.size(); ++j) {
      int e = exps[static_cast<std::size_t>(j)];
      if (j == lowered) --e;
      if (e > 0) p *= pow(x[j], e);
    }
    return p;
  }

  Index dim_ = 0;
  std::vector<Monomial<Scalar>> terms_;
};

/// Polynomial tables describing a scenario without closures.
template <typename Scalar>
struct PolynomialSystem
{
  std::string name;
  Index state_dim = 0;
  Index input_dim = 0;
  std::vector<Polynomial<Scalar>> drift;                   // n entries
  std::vector<std::vector<Polynomial<Scalar>>> actuation;  // n rows of m entries
  Polynomial<Scalar> clf;
  Polynomial<Scalar> clf_rate;
  Polynomial<Scalar> cbf;
  ClassKFunction<Scalar> alpha = ClassKFunction<Scalar>::linear(Scalar(1));
  Box<Scalar> working_region;
  Scalar origin_tolerance = Scalar(1e-6);
};

template <typename Scalar>
Scenario<Scalar> make_polynomial_scenario(PolynomialSystem<Scalar> sys)
{
  using Vec = VectorX<Scalar>;
  const Index n = sys.state_dim;
  const Index m = sys.input_dim;
  if (static_cast<Index>(sys.drift.size()) != n) throw ConfigurationError("drift needs one polynomial per state");
  if (static_cast<Index>(sys.actuation.size()) != n) throw ConfigurationError("actuation needs one row per state");
  for (const auto & row : sys.actuation) {
    if (static_cast<Index>(row.size()) != m) throw ConfigurationError("actuation row needs one polynomial per input");
  }

  ScenarioDefinition<Scalar> def;
  def.name = sys.name;
  def.dynamics.state_dim = n;
  def.dynamics.input_dim = m;
  def.dynamics.drift = [drift = sys.drift](const Vec & x) {
    Vec f(static_cast<Index>(drift.size()));
    for (std::size_t i = 0; i < drift.size(); ++i) f[static_cast<Index>(i)] = drift[i](x);
    return f;
  };
  def.dynamics.actuation = [act = sys.actuation, n, m](const Vec & x) {
    MatrixX<Scalar> g(n, m);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j) g(i, j) = act[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](x);
    return g;
  };
  def.clf.value = [p = sys.clf](const Vec & x) { return p(x); };
  def.clf.gradient = [p = sys.clf](const Vec & x) { return p.gradient(x); };
  def.clf_rate.value = [p = sys.clf_rate](const Vec & x) { return p(x); };
  def.clf_rate.gradient = [p = sys.clf_rate](const Vec & x) { return p.gradient(x); };
  def.cbf.value = [p = sys.cbf](const Vec & x) { return p(x); };
  def.cbf.gradient = [p = sys.cbf](const Vec & x) { return p.gradient(x); };
  def.alpha = sys.alpha;
  def.working_region = sys.working_region;
  def.origin_tolerance = sys.origin_tolerance;
  return Scenario<Scalar>(std::move(def));
}

}  // namespace safestab
