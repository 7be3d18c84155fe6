#include "safestab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace safestab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSingular = 1e-12;  // |Lgh| at or below this counts as vanishing

double lgh_norm_sq(const LieDataD & lie)
{
  const double hh = lie.lgh.squaredNorm();
  if (!(std::sqrt(hh) > kSingular)) throw SingularConstraintError("L_g h vanishes");
  return hh;
}

// a / b with the empty-set conventions: x / 0 = +inf for x > 0, 0 / 0 = 0.
double ratio(double a, double b)
{
  if (b == 0.0) return a > 0.0 ? kInf : 0.0;
  return a / b;
}

Eigen::VectorXd h_gradient(const ScenarioD & s, const Eigen::VectorXd & x)
{
  return s.cbf().gradient(x);
}

std::vector<Eigen::VectorXd> boundary_samples(const ScenarioD & s, const SamplingPlan & plan)
{
  return zero_level_points([&](const Eigen::VectorXd & x) { return s.cbf().value(x); },
                           [&](const Eigen::VectorXd & x) { return h_gradient(s, x); }, s.working_region(),
                           plan.grid_resolution, plan.boundary_samples, plan.seed + 1);
}

/// Grid nodes plus random draws over the working region.
struct RegionSamples
{
  Grid grid;
  std::vector<Eigen::VectorXd> random;
};

RegionSamples region_samples(const ScenarioD & s, const SamplingPlan & plan)
{
  std::mt19937_64 rng(plan.seed);
  return {Grid(s.working_region(), plan.grid_resolution), random_points(s.working_region(), plan.random_samples, rng)};
}

template <typename Fn>
void for_each_sample(const RegionSamples & rs, Fn && fn)
{
  for (Index k = 0; k < rs.grid.size(); ++k) fn(rs.grid.point(k));
  for (const auto & x : rs.random) fn(x);
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> & F,
                            const Eigen::VectorXd & x, Index rows, double step)
{
  Eigen::MatrixXd J(rows, x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    J.col(i) = (F(xp) - F(xm)) / (2.0 * step);
  }
  return J;
}

double safe_norm(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> & F, const Eigen::VectorXd & x)
{
  try {
    const Eigen::VectorXd r = F(x);
    return r.allFinite() ? r.norm() : kInf;
  } catch (const Error &) {
    return kInf;
  }
}

/// Damped Newton with a finite-difference Jacobian and a least-squares step.
std::optional<Eigen::VectorXd> newton_refine(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> & F,
                                             Eigen::VectorXd x, const EquilibriumOptions & opt, const Box<double> & box)
{
  double rn = safe_norm(F, x);
  for (int it = 0; it < opt.newton_iterations && rn > opt.newton_tolerance; ++it) {
    Eigen::MatrixXd J;
    try {
      J = fd_jacobian(F, x, x.size(), opt.fd_step);
    } catch (const Error &) {
      return std::nullopt;
    }
    if (!J.allFinite()) return std::nullopt;
    const Eigen::VectorXd dx = J.completeOrthogonalDecomposition().solve(-F(x));
    bool accepted = false;
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      const Eigen::VectorXd xn = x + t * dx;
      const double rnew = safe_norm(F, xn);
      if (rnew < rn) {
        x = xn;
        rn = rnew;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (rn <= opt.newton_tolerance && box.contains(x)) return x;
  return std::nullopt;
}

void add_unique(std::vector<EquilibriumCandidate> & list, EquilibriumCandidate c)
{
  for (const auto & other : list) {
    if ((other.state - c.state).norm() <= 1e-6) return;
  }
  list.push_back(std::move(c));
}

/// Indices of grid nodes whose value is finite and no larger than any axis neighbor.
std::vector<Index> local_minima(const Grid & grid, const std::vector<double> & values)
{
  std::vector<Index> out;
  for (Index k = 0; k < grid.size(); ++k) {
    const double v = values[static_cast<std::size_t>(k)];
    if (!std::isfinite(v)) continue;
    bool minimum = true;
    for (Index axis = 0; axis < grid.dim() && minimum; ++axis) {
      for (int step : {-1, 1}) {
        const Index j = grid.neighbor(k, axis, step);
        if (j >= 0 && values[static_cast<std::size_t>(j)] < v) {
          minimum = false;
          break;
        }
      }
    }
    if (minimum) out.push_back(k);
  }
  return out;
}

double n3_over(const ScenarioD & s, const std::vector<Eigen::VectorXd> & safe, double radius)
{
  double n3 = kInf;
  auto visit = [&](const Eigen::VectorXd & x) {
    if (x.norm() < radius) return;
    const LieDataD lie = lie_derivatives(s, x);
    if (lie.h < 0.0) return;
    n3 = std::min(n3, (lie.g * lie.lgv).norm());
  };
  for (const auto & x : safe) visit(x);
  for (const auto & x : sphere_points(s.state_dim(), radius, 720, 7)) {
    if (s.working_region().contains(x)) visit(x);
  }
  return n3;
}

std::vector<Eigen::VectorXd> safe_points(const ScenarioD & s, const RegionSamples & rs)
{
  std::vector<Eigen::VectorXd> out;
  for_each_sample(rs, [&](const Eigen::VectorXd & x) {
    if (s.cbf().value(x) >= 0.0) out.push_back(x);
  });
  return out;
}

double sup_drift(const ScenarioD & s, const std::vector<Eigen::VectorXd> & safe)
{
  double n1 = 0.0;
  for (const auto & x : safe) n1 = std::max(n1, s.dynamics().drift(x).norm());
  return n1;
}

}  // namespace

double switching_function(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon)
{
  if (!(epsilon > 0.0)) throw ConfigurationError("penalty parameter must be positive");
  const auto data = assemble_constraints(lie_derivatives(scenario, x), PenaltyMode::SafetyHard);
  return data.c - data.d.dot(data.b) / epsilon;
}

Eigen::VectorXd q1_residual(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon)
{
  const LieDataD lie = lie_derivatives(scenario, x);
  return lie.f - (lie.g * lie.lgv) / epsilon;
}

Eigen::VectorXd q2_residual(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon)
{
  const LieDataD lie = lie_derivatives(scenario, x);
  const double hh = lgh_norm_sq(lie);
  const double mu = lie.lgv.dot(lie.lgh) / hh;
  const Eigen::VectorXd lhs = lie.f - ((lie.lfh + lie.alpha_h) / hh) * (lie.g * lie.lgh);
  const Eigen::VectorXd rhs = (lie.g * (lie.lgv - mu * lie.lgh)) / epsilon;
  return lhs - rhs;
}

EquilibriumScan equilibrium_scan(const ScenarioD & scenario, double epsilon, const SamplingPlan & plan,
                                 double neighborhood_radius, const EquilibriumOptions & options)
{
  if (!(epsilon > 0.0)) throw ConfigurationError("penalty parameter must be positive");
  if (!(neighborhood_radius > 0.0)) throw ConfigurationError("neighborhood radius must be positive");

  const RegionSamples rs = region_samples(scenario, plan);
  const std::vector<Eigen::VectorXd> safe = safe_points(scenario, rs);
  std::vector<Eigen::VectorXd> boundary = boundary_samples(scenario, plan);
  const Box<double> & box = scenario.working_region();

  EquilibriumScan scan;
  scan.safe_sample_count = safe.size();
  scan.n1 = sup_drift(scenario, safe);
  scan.n3 = n3_over(scenario, safe, neighborhood_radius);
  scan.epsilon_q1_bound = ratio(scan.n3, scan.n1);

  auto F1 = [&](const Eigen::VectorXd & x) { return q1_residual(scenario, x, epsilon); };
  auto F2 = [&](const Eigen::VectorXd & x) { return q2_residual(scenario, x, epsilon); };

  // Q1: seeds at grid-local minima of the residual over safe nodes.
  {
    std::vector<double> values(static_cast<std::size_t>(rs.grid.size()), kInf);
    for (Index k = 0; k < rs.grid.size(); ++k) {
      const Eigen::VectorXd x = rs.grid.point(k);
      if (scenario.cbf().value(x) >= 0.0) values[static_cast<std::size_t>(k)] = safe_norm(F1, x);
    }
    for (Index k : local_minima(rs.grid, values)) {
      const auto root = newton_refine(F1, rs.grid.point(k), options, box);
      if (!root) continue;
      const double h = scenario.cbf().value(*root);
      const double e = switching_function(scenario, *root, epsilon);
      if (h < -options.boundary_tolerance || e > 0.0) continue;
      add_unique(scan.q1_candidates, {*root, F1(*root).norm(), e, h});
    }
  }

  // Q2: seeds at grid-local minima and at the boundary samples with the smallest residual.
  {
    std::vector<double> values(static_cast<std::size_t>(rs.grid.size()));
    for (Index k = 0; k < rs.grid.size(); ++k) values[static_cast<std::size_t>(k)] = safe_norm(F2, rs.grid.point(k));
    std::vector<Eigen::VectorXd> seeds;
    for (Index k : local_minima(rs.grid, values)) seeds.push_back(rs.grid.point(k));

    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < boundary.size(); ++i) ranked.emplace_back(safe_norm(F2, boundary[i]), i);
    std::sort(ranked.begin(), ranked.end());
    for (std::size_t i = 0; i < std::min<std::size_t>(32, ranked.size()); ++i) {
      seeds.push_back(boundary[ranked[i].second]);
    }

    for (const auto & seed : seeds) {
      const auto root = newton_refine(F2, seed, options, box);
      if (!root) continue;
      const double h = scenario.cbf().value(*root);
      const double e = switching_function(scenario, *root, epsilon);
      if (std::abs(h) > options.boundary_tolerance || !(e > 0.0)) continue;
      add_unique(scan.q2_candidates, {*root, F2(*root).norm(), e, h});
    }
  }

  // Refined Q2 roots lie on the boundary and sharpen the N4 estimate.
  for (const auto & c : scan.q2_candidates) boundary.push_back(c.state);
  scan.boundary_sample_count = boundary.size();
  if (!boundary.empty()) {
    double n2 = 0.0, n4 = kInf;
    for (const auto & x : boundary) {
      const LieDataD lie = lie_derivatives(scenario, x);
      const double hh = lie.lgh.squaredNorm();
      if (!(std::sqrt(hh) > kSingular)) continue;
      const double mu = lie.lgv.dot(lie.lgh) / hh;
      n2 = std::max(n2, (lie.f - ((lie.lfh + lie.alpha_h) / hh) * (lie.g * lie.lgh)).norm());
      n4 = std::min(n4, (lie.g * (lie.lgv - mu * lie.lgh)).norm());
    }
    scan.n2 = n2;
    scan.n4 = n4;
    scan.epsilon_q2_bound = ratio(n4, n2);
  }
  return scan;
}

std::vector<TradeoffPoint> q1_tradeoff(const ScenarioD & scenario, const SamplingPlan & plan,
                                       std::span<const double> radii)
{
  const RegionSamples rs = region_samples(scenario, plan);
  const std::vector<Eigen::VectorXd> safe = safe_points(scenario, rs);
  const double n1 = sup_drift(scenario, safe);
  std::vector<TradeoffPoint> out;
  for (double r : radii) {
    if (!(r > 0.0)) throw ConfigurationError("neighborhood radius must be positive");
    const double n3 = n3_over(scenario, safe, r);
    out.push_back({r, n3, ratio(n3, n1)});
  }
  return out;
}

IncompatibilityResult incompatibility_test(const LieDataD & lie, double dep_tol)
{
  const double hh = lgh_norm_sq(lie);
  IncompatibilityResult r;
  r.inner_product = lie.lgv.dot(lie.lgh);
  r.mu = r.inner_product / hh;
  r.dependence_residual = (lie.lgv - r.mu * lie.lgh).norm();
  r.dependent = r.dependence_residual <= dep_tol * lie.lgv.norm();
  r.clf_side = lie.lfv + lie.w;
  r.cbf_side = r.mu * (lie.lfh + lie.alpha_h);
  r.incompatible = r.dependent && r.inner_product > 0.0 && r.clf_side > r.cbf_side;
  return r;
}

IncompatibilityResult incompatibility_test(const ScenarioD & scenario, const Eigen::VectorXd & x, double dep_tol)
{
  return incompatibility_test(lie_derivatives(scenario, x), dep_tol);
}

std::vector<Eigen::VectorXd> incompatibility_scan(const ScenarioD & scenario, int grid_resolution, double dep_tol)
{
  const Grid grid(scenario.working_region(), grid_resolution);
  std::vector<Eigen::VectorXd> out;
  for (Index k = 0; k < grid.size(); ++k) {
    const Eigen::VectorXd x = grid.point(k);
    const LieDataD lie = lie_derivatives(scenario, x);
    if (!(lie.lgh.norm() > kSingular)) continue;
    if (incompatibility_test(lie, dep_tol).incompatible) out.push_back(x);
  }
  return out;
}

double b_function(const LieDataD & lie)
{
  const double hh = lgh_norm_sq(lie);
  return lie.lfv + lie.w - (lie.lfh + lie.alpha_h) / hh * lie.lgv.dot(lie.lgh);
}

double c_function(const LieDataD & lie)
{
  // (LgV.Lgh)^2 / |Lgh|^2 - |LgV|^2 written as minus the squared distance of
  // LgV from span(Lgh), which keeps the sign exact under round-off.
  const double hh = lgh_norm_sq(lie);
  const double mu = lie.lgv.dot(lie.lgh) / hh;
  return -(lie.lgv - mu * lie.lgh).squaredNorm();
}

double b_function(const ScenarioD & scenario, const Eigen::VectorXd & x)
{
  return b_function(lie_derivatives(scenario, x));
}

double c_function(const ScenarioD & scenario, const Eigen::VectorXd & x)
{
  return c_function(lie_derivatives(scenario, x));
}

namespace {

struct Sublevel
{
  std::optional<Grid> grid;
  std::vector<char> inside;  // per grid node
  std::vector<Eigen::VectorXd> points;
};

Sublevel sublevel(const ScenarioD & s, double nu, const SamplingPlan & plan)
{
  const Box<double> & region = s.working_region();
  const Grid coarse(region, plan.grid_resolution);
  const Index n = s.state_dim();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, kInf), hi = Eigen::VectorXd::Constant(n, -kInf);
  for (Index k = 0; k < coarse.size(); ++k) {
    const Eigen::VectorXd x = coarse.point(k);
    if (s.clf().value(x) <= nu) {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
  }
  Sublevel out;
  if (!(lo.array() <= hi.array()).all()) return out;
  Box<double> box{(lo - coarse.spacing()).cwiseMax(region.lower), (hi + coarse.spacing()).cwiseMin(region.upper)};

  out.grid.emplace(box, plan.grid_resolution);
  out.inside.assign(static_cast<std::size_t>(out.grid->size()), 0);
  for (Index k = 0; k < out.grid->size(); ++k) {
    const Eigen::VectorXd x = out.grid->point(k);
    if (s.clf().value(x) <= nu) {
      out.inside[static_cast<std::size_t>(k)] = 1;
      out.points.push_back(x);
    }
  }
  std::mt19937_64 rng(plan.seed);
  for (auto & x : random_points(box, plan.random_samples, rng)) {
    if (s.clf().value(x) <= nu) out.points.push_back(std::move(x));
  }
  return out;
}

/// Bucket hash for radius queries against a point set.
class BallIndex
{
public:
  BallIndex(const std::vector<Eigen::VectorXd> & centers, double radius) : centers_(centers), radius_(radius)
  {
    for (std::size_t i = 0; i < centers_.size(); ++i) cells_[key(centers_[i])].push_back(i);
  }

  /// Index of a center within `radius` of x, or -1.
  long long covering(const Eigen::VectorXd & x) const
  {
    const std::vector<long long> base = key(x);
    const std::size_t n = base.size();
    std::vector<long long> probe(n);
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    for (std::size_t c = 0; c < combos; ++c) {
      std::size_t rem = c;
      for (std::size_t i = 0; i < n; ++i) {
        probe[i] = base[i] + static_cast<long long>(rem % 3) - 1;
        rem /= 3;
      }
      const auto it = cells_.find(probe);
      if (it == cells_.end()) continue;
      for (std::size_t j : it->second) {
        if ((centers_[j] - x).norm() <= radius_) return static_cast<long long>(j);
      }
    }
    return -1;
  }

private:
  std::vector<long long> key(const Eigen::VectorXd & x) const
  {
    std::vector<long long> k(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) k[static_cast<std::size_t>(i)] = static_cast<long long>(std::floor(x[i] / radius_));
    return k;
  }

  const std::vector<Eigen::VectorXd> & centers_;
  double radius_;
  std::map<std::vector<long long>, std::vector<std::size_t>> cells_;
};

/// Largest eps for which the projection branch keeps z < 0 at a state with B >= 0.
double projection_cap(const LieDataD & lie, double b, double c)
{
  const double vh = lie.lgv.dot(lie.lgh);
  const double s = lie.lfh + lie.alpha_h;
  // e > 0 exactly when vh / eps > s.
  double branch_cap = 0.0;
  if (vh <= 0.0 && s >= 0.0) {
    branch_cap = kInf;
  } else if (vh < 0.0 && s < 0.0) {
    branch_cap = vh / s;
  }
  const double curvature_cap = b > 0.0 ? -c / b : (c < 0.0 ? kInf : 0.0);
  return std::max(branch_cap, curvature_cap);
}

bool projection_active_for_small_eps(const LieDataD & lie)
{
  const double vh = lie.lgv.dot(lie.lgh);
  const double s = lie.lfh + lie.alpha_h;
  return vh > 0.0 || (vh == 0.0 && s < 0.0);
}

}  // namespace

std::vector<Eigen::VectorXd> sublevel_samples(const ScenarioD & scenario, double nu, const SamplingPlan & plan)
{
  if (!(nu > 0.0)) throw ConfigurationError("level nu must be positive");
  return sublevel(scenario, nu, plan).points;
}

RoaCertificate roa_certify(const ScenarioD & scenario, const RoaOptions & opt)
{
  if (!(opt.nu > 0.0)) throw ConfigurationError("level nu must be positive");
  if (!(opt.radius_v > 0.0) || !(opt.radius_w > 0.0)) throw ConfigurationError("neighborhood radii must be positive");

  RoaCertificate cert;
  cert.nu = opt.nu;
  cert.radius_v = opt.radius_v;
  cert.radius_w = opt.radius_w;

  Sublevel level = sublevel(scenario, opt.nu, opt.plan);
  for (const auto & x : sphere_points(scenario.state_dim(), opt.radius_v, 720, opt.plan.seed)) {
    if (scenario.working_region().contains(x) && scenario.clf().value(x) <= opt.nu) level.points.push_back(x);
  }
  if (level.points.empty()) throw ConfigurationError("sublevel set has no samples in the working region");
  cert.sample_count = level.points.size();

  // (i) incompatible points anywhere in the sublevel set.
  std::optional<std::pair<double, Eigen::VectorXd>> worst;
  for (const auto & x : level.points) {
    const LieDataD lie = lie_derivatives(scenario, x);
    if (!(lie.lgh.norm() > kSingular)) continue;
    if (!incompatibility_test(lie, opt.dep_tol).incompatible) continue;
    ++cert.incompatible_count;
    cert.incompatible_points.push_back(x);
    if (!worst || lie.v < worst->first) worst.emplace(lie.v, x);
  }
  cert.incompatible_free = cert.incompatible_count == 0;
  if (!cert.incompatible_free) {
    cert.refusal = "incompatible point in the sublevel set";
    cert.witness = worst->second;
    return cert;
  }

  // Evaluate B and C once; the remaining steps use the safe part only.
  struct Eval
  {
    Eigen::VectorXd x;
    LieDataD lie;
    double b, c;
  };
  std::vector<Eval> evals;
  evals.reserve(level.points.size());
  for (const auto & x : level.points) {
    LieDataD lie = lie_derivatives(scenario, x);
    if (lie.h < 0.0 || !(lie.lgh.norm() > kSingular)) continue;
    const double b = b_function(lie), c = c_function(lie);
    evals.push_back({x, std::move(lie), b, c});
  }

  // (ii) standing assumption: no B = C = 0 away from the origin.
  for (const auto & ev : evals) {
    if (ev.x.norm() > scenario.origin_tolerance() && std::max(std::abs(ev.b), std::abs(ev.c)) <= opt.bc_tol) {
      cert.standing_assumption_violations.push_back(ev.x);
    }
  }

  // P_nu samples, plus grid-local maxima of C pushed onto {C = 0}.
  std::vector<Eigen::VectorXd> p_samples;
  for (const auto & ev : evals) {
    if (std::abs(ev.c) <= opt.c_tol) p_samples.push_back(ev.x);
  }
  if (level.grid) {
    const Grid & grid = *level.grid;
    std::vector<double> neg_c(static_cast<std::size_t>(grid.size()), kInf);
    for (Index k = 0; k < grid.size(); ++k) {
      if (!level.inside[static_cast<std::size_t>(k)]) continue;
      const LieDataD lie = lie_derivatives(scenario, grid.point(k));
      if (lie.h < 0.0 || !(lie.lgh.norm() > kSingular)) continue;
      neg_c[static_cast<std::size_t>(k)] = -c_function(lie);
    }
    auto c_at = [&](const Eigen::VectorXd & x) { return c_function(scenario, x); };
    for (Index k : local_minima(grid, neg_c)) {
      if (neg_c[static_cast<std::size_t>(k)] <= opt.c_tol) continue;
      Eigen::VectorXd x = grid.point(k);
      bool ok = false;
      try {
        for (int it = 0; it < 60; ++it) {
          const double c = c_at(x);
          if (std::abs(c) <= opt.c_tol) {
            ok = true;
            break;
          }
          Eigen::VectorXd g(x.size());
          for (Index i = 0; i < x.size(); ++i) {
            Eigen::VectorXd xp = x, xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            g[i] = (c_at(xp) - c_at(xm)) / 2e-6;
          }
          const double gg = g.squaredNorm();
          if (!(gg > 0.0)) break;
          x -= (c / gg) * g;
        }
      } catch (const Error &) {
        ok = false;
      }
      if (ok && scenario.working_region().contains(x) && scenario.clf().value(x) <= opt.nu &&
          scenario.cbf().value(x) >= 0.0) {
        p_samples.push_back(x);
      }
    }
  }
  cert.p_sample_count = p_samples.size();

  // (iii) the neighborhood W of P_nu: where B >= 0 the projection branch must
  // stay inactive or dominated by C for the eps in use.
  const BallIndex w_index(p_samples, opt.radius_w);
  std::vector<char> in_w(evals.size(), 0);
  cert.epsilon_w = kInf;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const Eval & ev = evals[i];
    in_w[i] = !p_samples.empty() && w_index.covering(ev.x) >= 0;
    if (!in_w[i] || ev.x.norm() < opt.radius_v || ev.b < 0.0) continue;
    if (std::abs(ev.c) <= opt.c_tol && projection_active_for_small_eps(ev.lie)) {
      cert.refusal = "B >= 0 on the barrier-dominated neighborhood where the projection branch is active";
      cert.witness = ev.x;
      return cert;
    }
    cert.epsilon_w = std::min(cert.epsilon_w, projection_cap(ev.lie, ev.b, ev.c));
  }

  // (iv) constants.
  double m1 = 0.0, m2 = 0.0, m3 = kInf, m4 = kInf;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const Eval & ev = evals[i];
    const double hh = ev.lie.lgh.squaredNorm();
    m1 = std::max(m1, std::abs(ev.lie.lfv + ev.lie.w));
    m2 = std::max(m2, std::abs((ev.lie.lfh + ev.lie.alpha_h) / hh * ev.lie.lgh.dot(ev.lie.lgv)));
    if (ev.x.norm() < opt.radius_v) continue;
    m3 = std::min(m3, ev.lie.lgv.squaredNorm());
    if (!in_w[i]) m4 = std::min(m4, std::abs(ev.c));
  }
  cert.m1 = m1;
  cert.m2 = m2;
  cert.m3 = m3;
  cert.m4 = m4;
  cert.epsilon_bar = std::min(ratio(m4, m1 + m2), ratio(m3, m1));
  cert.degenerate = std::isinf(cert.epsilon_bar);

  if (!opt.limit_radii.empty()) {
    const LimitEstimates lim = limit_estimates(scenario, opt.limit_radii, 720, opt.plan.seed);
    cert.l1_estimate = lim.l1;
    cert.l2_estimate = lim.l2;
    cert.epsilon_hat =
        std::min({cert.epsilon_bar, cert.epsilon_w, opt.margin * lim.l1, opt.margin * lim.l2});
  }
  cert.issued = true;
  return cert;
}

LevelBound largest_certified_level(const ScenarioD & scenario, const SamplingPlan & plan, double dep_tol)
{
  LevelBound out;
  {
    const Grid grid(scenario.working_region(), plan.grid_resolution);
    for (Index k = 0; k < grid.size(); ++k) out.nu_max = std::max(out.nu_max, scenario.clf().value(grid.point(k)));
    const auto & box = scenario.working_region();
    for (unsigned mask = 0; mask < (1u << std::min<Index>(box.dim(), 20)); ++mask) {
      out.nu_max = std::max(out.nu_max, scenario.clf().value(box.corner(mask)));
    }
  }

  auto free_at = [&](double nu) {
    for (const auto & x : sublevel_samples(scenario, nu, plan)) {
      const LieDataD lie = lie_derivatives(scenario, x);
      if (!(lie.lgh.norm() > kSingular)) continue;
      if (incompatibility_test(lie, dep_tol).incompatible) return false;
    }
    return true;
  };

  if (out.nu_max > 0.0 && free_at(out.nu_max)) {
    out.nu_raw = out.nu_max;
  } else if (out.nu_max > 0.0) {
    double lo = 0.0, hi = out.nu_max;
    while (hi - lo > 1e-3 * hi && hi > 1e-12 * out.nu_max) {
      const double mid = 0.5 * (lo + hi);
      (free_at(mid) ? lo : hi) = mid;
    }
    out.nu_raw = lo;
  }

  out.nu_boundary = kInf;
  for (const auto & x : boundary_samples(scenario, plan)) {
    out.nu_boundary = std::min(out.nu_boundary, scenario.clf().value(x));
  }
  out.nu_star = std::min(out.nu_raw, out.nu_boundary);
  return out;
}

LimitEstimates limit_estimates(const ScenarioD & scenario, std::span<const double> radii, int directions,
                               std::uint64_t seed)
{
  if (radii.empty()) throw ConfigurationError("limit estimates need at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] < radii[i - 1]))) {
      throw ConfigurationError("radii must be positive and strictly decreasing");
    }
  }

  LimitEstimates out;
  for (double r : radii) {
    double l1 = kInf, l2 = kInf;
    for (const auto & x : sphere_points(scenario.state_dim(), r, directions, seed)) {
      const LieDataD lie = lie_derivatives(scenario, x);
      const double clf = std::abs(lie.lfv + lie.w);
      if (clf > 0.0) l1 = std::min(l1, lie.lgv.squaredNorm() / clf);
      if (!(lie.lgh.norm() > kSingular)) continue;
      const double b = b_function(lie);
      if (b > 0.0 && lie.lgv.dot(lie.lgh) > 0.0) l2 = std::min(l2, std::abs(c_function(lie)) / b);
    }
    out.l1_by_radius.push_back(l1);
    out.l2_by_radius.push_back(l2);
  }
  out.l1 = out.l1_by_radius.back();
  out.l2 = out.l2_by_radius.back();

  auto monotone = [](const std::vector<double> & v) {
    bool up = true, down = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double slack = 1e-9 * (1.0 + std::abs(v[i - 1]));
      if (v[i] < v[i - 1] - slack) up = false;
      if (v[i] > v[i - 1] + slack) down = false;
    }
    return up || down;
  };
  out.l1_monotone = monotone(out.l1_by_radius);
  out.l2_monotone = monotone(out.l2_by_radius);
  return out;
}

DecreaseMargin clf_decrease_margin(const ScenarioD & scenario, const Eigen::VectorXd & x, double epsilon)
{
  const LieDataD lie = lie_derivatives(scenario, x);
  const ControlOutput<double> out =
      penalty_controller(assemble_constraints(lie, PenaltyMode::SafetyHard), epsilon);
  DecreaseMargin m;
  m.z = lie.lfv + lie.lgv.dot(out.u) + lie.w;
  m.branch = out.branch;
  if (out.branch == Branch::Interior) {
    m.branch_formula = lie.lfv + lie.w - lie.lgv.squaredNorm() / epsilon;
  } else {
    m.branch_formula = b_function(lie) + c_function(lie) / epsilon;
  }
  return m;
}

}  // namespace safestab
