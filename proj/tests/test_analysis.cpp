#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/half_spaces.hpp"
#include "oracles/random_polynomial.hpp"
#include "safestab/analysis.hpp"

using namespace safestab;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

const Scenario<double> & planar()
{
  static const Scenario<double> s = build_planar_example();
  return s;
}

VectorXd v2(double a, double b)
{
  return Vector2d(a, b);
}

std::vector<VectorXd> random_states(const Box<double> & box, int count, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<VectorXd> out;
  for (int k = 0; k < count; ++k) {
    VectorXd x(box.dim());
    for (Index i = 0; i < x.size(); ++i) x[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * unit(rng);
    out.push_back(x);
  }
  return out;
}

// The incompatible set of the planar example: the axis x1 = 0 above the
// unsafe disk and below x2 = -2 sqrt(3), where LfV + W overtakes the barrier side.
bool in_planar_incompatible_set(const VectorXd & x)
{
  return x[0] == 0.0 && (x[1] > 4.0 || x[1] < -2.0 * std::sqrt(3.0));
}

RoaOptions planar_roa(double nu)
{
  RoaOptions o;
  o.nu = nu;
  o.radius_v = 0.4;
  o.radius_w = 0.8;
  o.limit_radii = {0.4, 0.1, 0.01, 0.001};
  return o;
}

/// Half-plane x1 >= -1 on a small box: compatible everywhere, no boundary inside the region.
Scenario<double> half_plane_scenario()
{
  ScenarioDefinition<double> def = planar().definition();
  def.name = "half-plane";
  def.cbf.value = [](const VectorXd & x) { return 1.0 + x[0]; };
  def.cbf.gradient = [](const VectorXd &) -> VectorXd { return Vector2d(1, 0); };
  def.working_region = Box<double>::symmetric(2, 0.5);
  return Scenario<double>(def);
}

}  // namespace

TEST(SwitchingFunction, PlanarExamples)
{
  EXPECT_NEAR(switching_function(planar(), v2(0, 6), 0.01), 2376.0, 1e-9);
  EXPECT_NEAR(switching_function(planar(), v2(0, 6), 2.0), -12.0, 1e-12);
  EXPECT_DOUBLE_EQ(switching_function(planar(), v2(0, 0), 0.3), -12.0);
}

TEST(SwitchingFunction, MatchesConstraintData)
{
  for (const auto & s : {planar(), oracle::random_polynomial_scenario(5)}) {
    for (const auto & x : random_states(s.working_region(), 2000, 1)) {
      const auto out = penalty_feedback(s, PenaltyConfig<double>{PenaltyMode::SafetyHard, 0.05}, x);
      const double e = switching_function(s, x, 0.05);
      EXPECT_LE(std::abs(e - out.e_value), 1e-12 * (1 + std::abs(e)));
    }
  }
}

TEST(Residuals, Q1Examples)
{
  for (double eps : {1e-3, 0.5, 10.0}) EXPECT_EQ(q1_residual(planar(), v2(0, 0), eps).norm(), 0.0);
  const VectorXd r = q1_residual(planar(), v2(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(r[0], -1.0);
  EXPECT_DOUBLE_EQ(r[1], 0.0);
}

TEST(Residuals, Q2VanishesAtBoundaryEquilibrium)
{
  for (double eps : {0.01, 0.1, 1.0}) EXPECT_LE(q2_residual(planar(), v2(0, 6), eps).norm(), 1e-10);
  EXPECT_THROW(q2_residual(planar(), v2(0, 4), 0.1), SingularConstraintError);
}

TEST(EquilibriumScan, PlanarConstants)
{
  const auto scan = equilibrium_scan(planar(), 0.01, SamplingPlan{}, 0.5);
  EXPECT_NEAR(scan.n1, std::sqrt(200.0), 1e-9);
  EXPECT_NEAR(scan.n3, 0.5, 1e-9);
  EXPECT_NEAR(scan.epsilon_q1_bound, 0.5 / std::sqrt(200.0), 1e-9);
  EXPECT_NEAR(scan.epsilon_q1_bound, 0.0354, 1e-4);
  ASSERT_TRUE(scan.n4.has_value());
  ASSERT_TRUE(scan.n2.has_value());
  EXPECT_LE(*scan.n4, 1e-8);
  EXPECT_GE(*scan.n2, 0.0);
  EXPECT_GT(scan.boundary_sample_count, 0u);
}

TEST(EquilibriumScan, Candidates)
{
  const auto scan = equilibrium_scan(planar(), 0.01, SamplingPlan{}, 0.5);
  // eps = 0.01 is below N3/N1, so interior equilibria are confined to the 0.5-ball.
  ASSERT_FALSE(scan.q1_candidates.empty());
  bool origin = false;
  for (const auto & c : scan.q1_candidates) {
    EXPECT_LT(c.state.norm(), 0.5);
    EXPECT_LE(c.residual, 1e-8);
    EXPECT_LE(c.e_value, 0.0);
    origin = origin || c.state.norm() < 1e-9;
  }
  EXPECT_TRUE(origin);

  ASSERT_EQ(scan.q2_candidates.size(), 1u);
  const auto & q2 = scan.q2_candidates.front();
  EXPECT_LE((q2.state - Vector2d(0, 6)).norm(), 1e-8);
  EXPECT_LE(std::abs(q2.h), 1e-6);
  EXPECT_GT(q2.e_value, 0.0);
  EXPECT_LE(q2.residual, 1e-8);
}

TEST(EquilibriumScan, BoundaryEquilibriumPersistsForLargeEpsilon)
{
  for (double eps : {0.1, 1.0}) {
    const auto scan = equilibrium_scan(planar(), eps, SamplingPlan{101, 200, 64, 2}, 0.5);
    for (const auto & c : scan.q2_candidates) EXPECT_LE(std::abs(c.h), 1e-6);
  }
}

TEST(EquilibriumScan, EmptyBoundaryLeavesConstantsUndefined)
{
  const auto scan = equilibrium_scan(half_plane_scenario(), 0.1, SamplingPlan{41, 100, 0, 1}, 0.1);
  EXPECT_FALSE(scan.n2.has_value());
  EXPECT_FALSE(scan.n4.has_value());
  EXPECT_FALSE(scan.epsilon_q2_bound.has_value());
}

TEST(EquilibriumScan, TradeoffShrinksWithRadius)
{
  const std::vector<double> radii{1.0, 0.5, 0.25, 0.1};
  const auto curve = q1_tradeoff(planar(), SamplingPlan{101, 500, 64, 1}, radii);
  ASSERT_EQ(curve.size(), radii.size());
  for (std::size_t i = 0; i < curve.size(); ++i) EXPECT_NEAR(curve[i].n3, radii[i], 1e-9);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LT(curve[i].epsilon_bound, curve[i - 1].epsilon_bound);
}

TEST(Incompatibility, ZeroSevenIsIncompatible)
{
  const auto r = incompatibility_test(planar(), v2(0, 7));
  EXPECT_TRUE(r.incompatible);
  EXPECT_TRUE(r.dependent);
  EXPECT_NEAR(r.mu, 7.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.clf_side, 98.0);
  EXPECT_NEAR(r.cbf_side, 7.0 / 6.0 * 47.0, 1e-12);
  EXPECT_NEAR(r.cbf_side, 54.83, 1e-2);
}

TEST(Incompatibility, IndependentGradientsAreCompatible)
{
  const auto r = incompatibility_test(planar(), v2(1, 1));
  EXPECT_FALSE(r.dependent);
  EXPECT_FALSE(r.incompatible);
  for (const auto & x : random_states(planar().working_region(), 1000, 2)) {
    EXPECT_FALSE(incompatibility_test(planar(), x).incompatible);
  }
}

TEST(Incompatibility, SingularBarrierGradientThrows)
{
  EXPECT_THROW(incompatibility_test(planar(), v2(0, 4)), SingularConstraintError);
}

TEST(Incompatibility, LowerAxisRayIsIncompatible)
{
  // At (0, -5) the decrease condition needs u2 >= 10 while the barrier allows u2 <= 167 / 18.
  const auto r = incompatibility_test(planar(), v2(0, -5));
  EXPECT_TRUE(r.incompatible);
  EXPECT_DOUBLE_EQ(r.clf_side, 50.0);
  EXPECT_NEAR(r.cbf_side, 90.0 / 324.0 * 167.0, 1e-12);
  EXPECT_FALSE(incompatibility_test(planar(), v2(0, -3.4)).incompatible);
  EXPECT_TRUE(incompatibility_test(planar(), v2(0, -3.5)).incompatible);
}

TEST(Incompatibility, AgreesWithHalfSpaceOracle)
{
  auto agree = [](const LieData<double> & lie) {
    const bool feasible = oracle::two_half_spaces_feasible(lie.lgv, -(lie.lfv + lie.w), -lie.lgh, lie.lfh + lie.alpha_h);
    return incompatibility_test(lie).incompatible == !feasible;
  };

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  int disagreements = 0, incompatible = 0, total = 0;
  for (const auto & s : {planar(), oracle::random_polynomial_scenario(5)}) {
    for (int k = 0; k < 10000; ++k) {
      // Half the states on the planar dependence axis, half anywhere.
      const VectorXd x = (k % 2 == 0) ? v2(0.0, u(rng)) : v2(u(rng), u(rng));
      if (!s.working_region().contains(x)) continue;
      const auto lie = lie_derivatives(s, x);
      if (lie.lgh.norm() <= 1e-12 || lie.lgv.norm() == 0.0) continue;
      ++total;
      incompatible += incompatibility_test(lie).incompatible;
      disagreements += !agree(lie);
    }
  }
  // Synthetic pairs with LgV = k Lgh for both signs of k.
  std::normal_distribution<double> n(0.0, 2.0);
  for (int k = 0; k < 10000; ++k) {
    LieData<double> lie = lie_derivatives(planar(), v2(1, 1));
    lie.lgh = Vector2d(n(rng), n(rng));
    lie.lgv = n(rng) * lie.lgh;
    lie.lfv = n(rng) * 10;
    lie.w = std::abs(n(rng));
    lie.lfh = n(rng) * 10;
    lie.alpha_h = n(rng);
    ++total;
    incompatible += incompatibility_test(lie).incompatible;
    disagreements += !agree(lie);
  }
  EXPECT_GE(total, 20000);
  EXPECT_GT(incompatible, 1000);
  EXPECT_EQ(disagreements, 0);
}

TEST(Incompatibility, PlanarGridScanFindsBothAxisRays)
{
  const auto flagged = incompatibility_scan(planar(), 401);
  int upper = 0, lower = 0;
  for (const auto & x : flagged) {
    EXPECT_TRUE(in_planar_incompatible_set(x)) << x.transpose();
    EXPECT_GT(x.norm(), 2.0);
    (x[1] > 4.0 ? upper : lower)++;
  }
  // Axis nodes are multiples of 0.05: 120 above x2 = 4 (4.05 .. 10) and
  // 131 below -2 sqrt(3) (-3.5 .. -10).
  EXPECT_EQ(upper, 120);
  EXPECT_EQ(lower, 131);
}

TEST(BcFunctions, PlanarValues)
{
  EXPECT_NEAR(c_function(planar(), v2(0, 7)), 0.0, 1e-12);
  EXPECT_NEAR(c_function(planar(), v2(1, 1)), -1.6, 1e-12);
  EXPECT_NEAR(b_function(planar(), v2(0, 7)), 98.0 - 47.0 / 36.0 * 42.0, 1e-12);
  EXPECT_NEAR(b_function(planar(), v2(0, 7)), 43.17, 1e-2);
  EXPECT_THROW(b_function(planar(), v2(0, 4)), SingularConstraintError);
}

TEST(BcFunctions, CIsNonpositive)
{
  for (const auto & s : {planar(), oracle::random_polynomial_scenario(5)}) {
    for (const auto & x : random_states(s.working_region(), 5000, 3)) {
      const auto lie = lie_derivatives(s, x);
      if (lie.lgh.norm() <= 1e-12) continue;
      EXPECT_LE(c_function(lie), 1e-12);
      const double hh = lie.lgh.squaredNorm();
      const double literal = std::pow(lie.lgv.dot(lie.lgh), 2) / hh - lie.lgv.squaredNorm();
      EXPECT_NEAR(c_function(lie), literal, 1e-9 * (1 + lie.lgv.squaredNorm()));
    }
  }
}

TEST(BcFunctions, PlanarClosedForm)
{
  // C = -(x1 (x2 - 4) - x2 x1)^2 * 4 / |grad h|^2 = -16 x1^2 / (x1^2 + (x2 - 4)^2).
  for (const auto & x : random_states(Box<double>::symmetric(2, 3.0), 500, 4)) {
    const double expected = -16.0 * x[0] * x[0] / (x[0] * x[0] + (x[1] - 4) * (x[1] - 4));
    EXPECT_NEAR(c_function(planar(), x), expected, 1e-12 * (1 + std::abs(expected)));
  }
}

TEST(Roa, PlanarLevelTwoIsCertified)
{
  const auto c = roa_certify(planar(), planar_roa(2.0));
  ASSERT_TRUE(c.issued) << c.refusal;
  EXPECT_TRUE(c.incompatible_free);
  EXPECT_EQ(c.incompatible_count, 0u);
  EXPECT_TRUE(c.standing_assumption_violations.empty());
  EXPECT_EQ(c.epsilon_bar, std::min(c.m4 / (c.m1 + c.m2), c.m3 / c.m1));
  EXPECT_FALSE(c.degenerate);
  EXPECT_NEAR(c.m1, 8.0, 0.05);
  EXPECT_NEAR(c.m3, 0.16, 1e-12);
  EXPECT_GT(c.m4, 0.29);
  EXPECT_LT(0.01, 0.9 * c.epsilon_bar);
  ASSERT_TRUE(c.epsilon_hat.has_value());
  EXPECT_GE(*c.epsilon_hat, 0.01);
  EXPECT_LE(*c.epsilon_hat, c.epsilon_bar);
  EXPECT_NEAR(*c.l1_estimate, 0.5, 1e-6);
}

TEST(Roa, SoundnessOnSublevelSamples)
{
  const auto c = roa_certify(planar(), planar_roa(2.0));
  ASSERT_TRUE(c.issued);
  const double eps = 0.9 * c.epsilon_bar;
  for (const auto & x : sublevel_samples(planar(), 2.0, SamplingPlan{})) {
    if (x.norm() < c.radius_v) continue;
    EXPECT_LE(clf_decrease_margin(planar(), x, eps).z, 1e-9) << x.transpose();
  }
}

TEST(Roa, PlanarLevelNineIsRefused)
{
  const auto c = roa_certify(planar(), planar_roa(9.0));
  EXPECT_FALSE(c.issued);
  EXPECT_FALSE(c.incompatible_free);
  ASSERT_TRUE(c.witness.has_value());
  EXPECT_TRUE(in_planar_incompatible_set(*c.witness));
  bool upper_ray = false;
  for (const auto & x : c.incompatible_points) {
    EXPECT_TRUE(in_planar_incompatible_set(x));
    upper_ray = upper_ray || (x[1] > 4.0 && x[1] <= std::sqrt(18.0));
  }
  EXPECT_TRUE(upper_ray);
  EXPECT_TRUE(incompatibility_test(planar(), v2(0, 4.1)).incompatible);
}

TEST(Roa, TinyLevelInsideOriginBallIsDegenerate)
{
  RoaOptions o;
  o.nu = 1e-4;
  o.radius_v = 0.1;
  o.radius_w = 0.1;
  const auto c = roa_certify(planar(), o);
  EXPECT_TRUE(std::isinf(c.m3));
  EXPECT_TRUE(std::isinf(c.m4));
  EXPECT_TRUE(std::isinf(c.epsilon_bar));
  EXPECT_TRUE(c.degenerate);
}

TEST(Roa, RejectsBadOptions)
{
  RoaOptions o;
  o.nu = -1.0;
  EXPECT_THROW(roa_certify(planar(), o), ConfigurationError);
  o.nu = 1.0;
  o.radius_w = 0.0;
  EXPECT_THROW(roa_certify(planar(), o), ConfigurationError);
}

TEST(LargestLevel, PlanarBounds)
{
  const auto lb = largest_certified_level(planar(), SamplingPlan{});
  EXPECT_DOUBLE_EQ(lb.nu_max, 100.0);
  // The lower axis ray enters at V = 6; the upper one only at V = 8.
  EXPECT_GE(lb.nu_raw, 6.0);
  EXPECT_LE(lb.nu_raw, 6.5);
  EXPECT_NEAR(lb.nu_boundary, 2.0, 1e-6);
  EXPECT_NEAR(lb.nu_star, 2.0, 1e-6);
}

TEST(LargestLevel, CompatibleScenarioReachesMaximum)
{
  const auto lb = largest_certified_level(half_plane_scenario(), SamplingPlan{51, 200, 32, 1});
  EXPECT_DOUBLE_EQ(lb.nu_max, 0.25);
  EXPECT_EQ(lb.nu_raw, lb.nu_max);
  EXPECT_TRUE(std::isinf(lb.nu_boundary));
  EXPECT_EQ(lb.nu_star, lb.nu_max);
}

TEST(LimitEstimates, Planar)
{
  const std::vector<double> radii{0.4, 0.1, 0.01, 0.001};
  const auto lim = limit_estimates(planar(), radii);
  EXPECT_NEAR(lim.l1, 0.5, 1e-6);
  for (double v : lim.l1_by_radius) EXPECT_NEAR(v, 0.5, 1e-12);
  EXPECT_TRUE(lim.l1_monotone);
  EXPECT_GT(lim.l2, 0.1);
  EXPECT_TRUE(std::isfinite(lim.l2));
}

TEST(LimitEstimates, VanishingClfTermIsInfinite)
{
  ScenarioDefinition<double> def = planar().definition();
  def.dynamics.drift = [](const VectorXd & x) -> VectorXd { return -x; };
  const Scenario<double> s(def);
  const std::vector<double> radii{0.1, 0.01};
  const auto lim = limit_estimates(s, radii);
  EXPECT_TRUE(std::isinf(lim.l1));
}

TEST(LimitEstimates, RadiiMustDecrease)
{
  const std::vector<double> radii{0.1, 0.2};
  EXPECT_THROW(limit_estimates(planar(), radii), ConfigurationError);
}

TEST(DecreaseMargin, PlanarExamples)
{
  const auto a = clf_decrease_margin(planar(), v2(0, 1), 0.01);
  EXPECT_EQ(a.branch, Branch::Interior);
  EXPECT_NEAR(a.z, -98.0, 1e-9);

  const auto b = clf_decrease_margin(planar(), v2(0, 9), 0.01);
  EXPECT_EQ(b.branch, Branch::ProjectedOntoHard);
  EXPECT_NEAR(b.z, 62.1, 1e-9);
  EXPECT_NEAR(c_function(planar(), v2(0, 9)), 0.0, 1e-15);
  EXPECT_NEAR(b.z, b_function(planar(), v2(0, 9)), 1e-9);
}

TEST(DecreaseMargin, BranchIdentities)
{
  for (const auto & s : {planar(), oracle::random_polynomial_scenario(5)}) {
    for (double eps : {0.005, 0.05, 0.5}) {
      for (const auto & x : random_states(s.working_region(), 3000, 6)) {
        if (lie_derivatives(s, x).lgh.norm() <= 1e-6) continue;
        const auto m = clf_decrease_margin(s, x, eps);
        EXPECT_LE(std::abs(m.z - m.branch_formula), 1e-9 * (1 + std::abs(m.z))) << x.transpose();
      }
    }
  }
}

TEST(Sampling, GridIsOriginAnchoredAndInsideBox)
{
  const Box<double> box{Vector2d(-10, -3), Vector2d(10, 7)};
  const Grid grid(box, 401);
  bool origin = false;
  for (Index k = 0; k < grid.size(); ++k) {
    const VectorXd x = grid.point(k);
    EXPECT_TRUE(box.contains(x));
    origin = origin || x.norm() == 0.0;
  }
  EXPECT_TRUE(origin);
  EXPECT_EQ(grid.count(0), 401);
}

TEST(Sampling, ZeroLevelPointsLieOnTheBoundary)
{
  const auto pts = zero_level_points([](const VectorXd & x) { return planar().cbf().value(x); },
                                     [](const VectorXd & x) { return planar().cbf().gradient(x); },
                                     planar().working_region(), 101, 50, 3);
  ASSERT_GT(pts.size(), 50u);
  for (const auto & x : pts) EXPECT_LE(std::abs(planar().cbf().value(x)), 1e-10);
}

TEST(Sampling, Deterministic)
{
  const auto a = sublevel_samples(planar(), 2.0, SamplingPlan{});
  const auto b = sublevel_samples(planar(), 2.0, SamplingPlan{});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  for (const auto & x : a) EXPECT_LE(planar().clf().value(x), 2.0);
}
