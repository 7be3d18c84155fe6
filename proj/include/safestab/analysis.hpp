#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safestab/controllers.hpp"
#include "safestab/sampling.hpp"
#include "safestab/systems.hpp"

namespace safestab {

using ScenarioD = Scenario<double>;
using LieDataD = LieData<double>;

/// e(x) = -Lfh + (1/eps) Lgh.LgV - alpha(h), the SafetyHard switching function.
double switching_function(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon);

/// f - (1/eps) g LgV; zero at interior-branch equilibria.
Eigen::VectorXd q1_residual(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon);

/// f - (Lfh + alpha(h)) / |Lgh|^2 g Lgh - (1/eps) g (LgV - mu Lgh); zero at projection-branch equilibria.
Eigen::VectorXd q2_residual(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon);

struct EquilibriumCandidate
{
  Eigen::VectorXd state;
  double residual;
  double e_value;
  double h;
};

struct EquilibriumScan
{
  std::vector<EquilibriumCandidate> q1_candidates;
  std::vector<EquilibriumCandidate> q2_candidates;
  double n1 = 0.0;                ///< sup |f| over the safe set
  std::optional<double> n2;       ///< sup over the boundary; empty when no boundary was sampled
  double n3 = 0.0;                ///< inf |g LgV| outside the origin ball
  std::optional<double> n4;       ///< inf |g (LgV - mu Lgh)| over the boundary
  double epsilon_q1_bound = 0.0;  ///< n3 / n1, +inf when n1 = 0
  std::optional<double> epsilon_q2_bound;
  std::size_t safe_sample_count = 0;
  std::size_t boundary_sample_count = 0;
};

struct EquilibriumOptions
{
  double newton_tolerance = 1e-8;
  int newton_iterations = 50;
  double fd_step = 1e-6;
  double boundary_tolerance = 1e-6;
};

EquilibriumScan equilibrium_scan(const ScenarioD & scenario, double epsilon, const SamplingPlan & plan,
                                 double neighborhood_radius, const EquilibriumOptions & options = {});

struct TradeoffPoint
{
  double radius;
  double n3;
  double epsilon_bound;
};

/// How the interior-equilibrium bound N3/N1 shrinks with the excluded origin ball.
std::vector<TradeoffPoint> q1_tradeoff(const ScenarioD & scenario, const SamplingPlan & plan,
                                       std::span<const double> radii);

struct IncompatibilityResult
{
  bool incompatible = false;
  bool dependent = false;
  double mu = 0.0;                   ///< LgV.Lgh / |Lgh|^2
  double dependence_residual = 0.0;  ///< |LgV - mu Lgh|
  double inner_product = 0.0;        ///< LgV.Lgh
  double clf_side = 0.0;             ///< LfV + W
  double cbf_side = 0.0;             ///< mu (Lfh + alpha(h))
};

IncompatibilityResult incompatibility_test(const LieDataD & lie, double dep_tol = 1e-8);
IncompatibilityResult incompatibility_test(const ScenarioD & scenario, const Eigen::VectorXd & x,
                                           double dep_tol = 1e-8);

/// Grid scan of the working region; returns every incompatible node (singular nodes skipped).
std::vector<Eigen::VectorXd> incompatibility_scan(const ScenarioD & scenario, int grid_resolution,
                                                  double dep_tol = 1e-8);

double b_function(const LieDataD & lie);
double c_function(const LieDataD & lie);
double b_function(const ScenarioD & scenario, const Eigen::VectorXd & x);
double c_function(const ScenarioD & scenario, const Eigen::VectorXd & x);

/// Samples of {V <= nu} inside the working region (grid refined to its bounding box, plus random draws).
std::vector<Eigen::VectorXd> sublevel_samples(const ScenarioD & scenario, double nu, const SamplingPlan & plan);

struct RoaOptions
{
  double nu = 1.0;
  SamplingPlan plan;
  double radius_v = 0.05;  ///< origin ball excluded from the decrease requirement
  double radius_w = 0.1;   ///< ball radius around each sample of {C = 0}
  double dep_tol = 1e-8;
  double c_tol = 1e-6;
  double bc_tol = 1e-6;
  std::vector<double> limit_radii;  ///< when non-empty, also estimate l1, l2 and epsilon_hat
  double margin = 0.9;
};

struct RoaCertificate
{
  bool issued = false;
  std::string refusal;
  std::optional<Eigen::VectorXd> witness;

  double nu = 0.0;
  double radius_v = 0.0;
  double radius_w = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  double epsilon_bar = 0.0;
  /// Cap from neighborhood samples where B >= 0; +inf when none constrain.
  double epsilon_w = 0.0;
  bool degenerate = false;  ///< epsilon_bar infinite because the infima ran over empty sets
  std::optional<double> epsilon_hat;
  std::optional<double> l1_estimate;
  std::optional<double> l2_estimate;
  bool incompatible_free = false;
  std::size_t sample_count = 0;
  std::size_t incompatible_count = 0;
  std::vector<Eigen::VectorXd> incompatible_points;
  std::size_t p_sample_count = 0;
  std::vector<Eigen::VectorXd> standing_assumption_violations;
};

RoaCertificate roa_certify(const ScenarioD & scenario, const RoaOptions & options);

struct LevelBound
{
  double nu_raw = 0.0;       ///< largest incompatibility-free level found by bisection
  double nu_boundary = 0.0;  ///< min V over the sampled barrier boundary
  double nu_star = 0.0;      ///< min(nu_raw, nu_boundary)
  double nu_max = 0.0;       ///< sup V over the working region
};

LevelBound largest_certified_level(const ScenarioD & scenario, const SamplingPlan & plan,
                                   double dep_tol = 1e-8);

struct LimitEstimates
{
  double l1 = 0.0;
  double l2 = 0.0;
  std::vector<double> l1_by_radius;
  std::vector<double> l2_by_radius;
  bool l1_monotone = true;
  bool l2_monotone = true;
};

/**
 * Sphere-sampled estimates of lim |LgV|^2 / |LfV + W| and lim |C| / |B| as
 * x -> 0. The second ratio is taken only where B > 0 and LgV.Lgh > 0, the
 * states where the projection branch can be active for small eps with a
 * positive B; elsewhere the decrease holds for every eps.
 */
LimitEstimates limit_estimates(const ScenarioD & scenario, std::span<const double> radii, int directions = 720,
                               std::uint64_t seed = 1);

struct DecreaseMargin
{
  double z;               ///< LfV + LgV.u + W under the SafetyHard penalty feedback
  Branch branch;
  double branch_formula;  ///< the same quantity from the closed branch expression
};

DecreaseMargin clf_decrease_margin(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon);

}  // namespace safestab
