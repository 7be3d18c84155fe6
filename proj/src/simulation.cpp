#include "safestab/simulation.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>

namespace safestab {

void SimConfig::validate() const
{
  if (!(dt > 0.0) || !(t_max > 0.0) || !(convergence_radius > 0.0) || !(stagnation_speed > 0.0) ||
      !(stagnation_window > 0.0) || !(safety_tolerance >= 0.0)) {
    throw ConfigurationError("simulation settings must be positive");
  }
  if (!(dt < t_max)) throw ConfigurationError("dt must be smaller than t_max");
}

Controller make_penalty_controller(const Scenario<double> & scenario, const PenaltyConfig<double> & config)
{
  if (!(config.epsilon > 0.0)) throw ConfigurationError("penalty parameter must be positive");
  return [&scenario, config](const Eigen::VectorXd & x) {
    const ControlOutput<double> out = penalty_feedback(scenario, config, x);
    return ControlSample{out.u, out.e_value, to_string(out.branch)};
  };
}

Controller make_penalty_controller(const Scenario<double> & scenario, const PenaltyConfig<double> & config,
                                   std::function<Eigen::VectorXd(const Eigen::VectorXd &)> u_nom)
{
  if (!(config.epsilon > 0.0)) throw ConfigurationError("penalty parameter must be positive");
  auto derived = std::make_shared<const Scenario<double>>(nominal_adaptation(scenario, u_nom));
  return [derived, config, u_nom](const Eigen::VectorXd & x) {
    const ControlOutput<double> out = penalty_feedback(*derived, config, x);
    return ControlSample{out.u + u_nom(x), out.e_value, to_string(out.branch)};
  };
}

Controller make_clf_cbf_qp_controller(const Scenario<double> & scenario, double p)
{
  if (!(p > 0.0)) throw ConfigurationError("relaxation weight p must be positive");
  return [&scenario, p](const Eigen::VectorXd & x) {
    const auto sol = clf_cbf_qp_controller(scenario, x, p);
    return ControlSample{sol.u, std::numeric_limits<double>::quiet_NaN(), to_string(sol.active)};
  };
}

Controller make_safety_filter_controller(const Scenario<double> & scenario,
                                         std::function<Eigen::VectorXd(const Eigen::VectorXd &)> u_nom)
{
  if (!u_nom) throw ConfigurationError("nominal controller is empty");
  return [&scenario, u_nom](const Eigen::VectorXd & x) {
    const LieData<double> lie = lie_derivatives(scenario, x);
    const Eigen::VectorXd nominal = u_nom(x);
    const Eigen::VectorXd u = safety_filter_controller(lie, nominal);
    const bool active = (u - nominal).squaredNorm() > 0.0;
    return ControlSample{u, lie.lfh + lie.lgh.dot(nominal) + lie.alpha_h, active ? "filtered" : "nominal"};
  };
}

const char * to_string(Outcome o)
{
  switch (o) {
    case Outcome::ConvergedToOrigin: return "converged";
    case Outcome::StuckAtEquilibrium: return "stuck";
    case Outcome::SafetyViolated: return "unsafe";
    case Outcome::TimedOut: return "timeout";
    case Outcome::Aborted: return "aborted";
  }
  return "?";
}

double Trajectory::min_h() const
{
  double m = std::numeric_limits<double>::infinity();
  for (const auto & s : samples) m = std::min(m, s.h);
  return m;
}

namespace {

Eigen::VectorXd vector_field(const Scenario<double> & s, const Eigen::VectorXd & x, const Eigen::VectorXd & u)
{
  const Eigen::VectorXd f = s.dynamics().drift(x);
  const Eigen::MatrixXd g = s.dynamics().actuation(x);
  if (u.size() != g.cols()) throw ConfigurationError("controller returned an input of the wrong dimension");
  Eigen::VectorXd xdot = f + g * u;
  detail::require_finite(xdot, "state derivative");
  return xdot;
}

}  // namespace

Trajectory simulate(const Scenario<double> & scenario, const Controller & controller, const Eigen::VectorXd & x0,
                    const SimConfig & config)
{
  config.validate();
  if (x0.size() != scenario.state_dim()) throw ConfigurationError("initial condition has the wrong dimension");

  Trajectory traj;
  const double dt = config.dt;
  const auto steps = static_cast<long long>(std::ceil(config.t_max / dt - 1e-9));
  const auto window = static_cast<long long>(std::ceil(config.stagnation_window / dt - 1e-9));

  Eigen::VectorXd x = x0;
  long long stagnant_since = -1;
  for (long long k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    Eigen::VectorXd xdot;
    ControlSample cs;
    try {
      cs = controller(x);
      xdot = vector_field(scenario, x, cs.u);
      TrajectorySample sample{t, x, cs.u, scenario.cbf().value(x), scenario.clf().value(x), cs.e, cs.branch};
      traj.samples.push_back(std::move(sample));
    } catch (const std::exception & err) {
      traj.outcome = Outcome::Aborted;
      traj.final_state = x;
      traj.event_time = t;
      traj.error = err.what();
      return traj;
    }

    const TrajectorySample & last = traj.samples.back();
    traj.final_state = x;
    traj.event_time = t;
    const double radius = x.norm();
    if (radius <= config.convergence_radius) {
      traj.outcome = Outcome::ConvergedToOrigin;
      return traj;
    }
    if (last.h < -config.safety_tolerance) {
      traj.outcome = Outcome::SafetyViolated;
      return traj;
    }
    if (xdot.norm() <= config.stagnation_speed) {
      if (stagnant_since < 0) stagnant_since = k;
      if (k - stagnant_since >= window) {
        traj.outcome = Outcome::StuckAtEquilibrium;
        return traj;
      }
    } else {
      stagnant_since = -1;
    }
    if (k >= steps) {
      traj.outcome = Outcome::TimedOut;
      return traj;
    }

    // One RK4 step; a failing stage aborts with that stage's state.
    Eigen::VectorXd stage = x;
    try {
      auto field = [&](const Eigen::VectorXd & y) {
        stage = y;
        return config.zero_order_hold ? vector_field(scenario, y, cs.u) : vector_field(scenario, y, controller(y).u);
      };
      const Eigen::VectorXd k1 = xdot;
      const Eigen::VectorXd k2 = field(x + 0.5 * dt * k1);
      const Eigen::VectorXd k3 = field(x + 0.5 * dt * k2);
      const Eigen::VectorXd k4 = field(x + dt * k3);
      Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      stage = next;
      detail::require_finite(next, "state");
      x = std::move(next);
    } catch (const std::exception & err) {
      traj.outcome = Outcome::Aborted;
      traj.final_state = stage;
      traj.event_time = t;
      traj.error = err.what();
      return traj;
    }
  }
}

std::vector<Trajectory> batch_simulate(const Scenario<double> & scenario, const Controller & controller,
                                       const std::vector<Eigen::VectorXd> & initial_conditions,
                                       const SimConfig & config)
{
  config.validate();
  std::vector<Trajectory> out;
  out.reserve(initial_conditions.size());
  for (const auto & x0 : initial_conditions) {
    try {
      out.push_back(simulate(scenario, controller, x0, config));
    } catch (const std::exception & err) {
      Trajectory t;
      t.outcome = Outcome::Aborted;
      t.final_state = x0;
      t.error = err.what();
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::string format_real(double value)
{
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv(std::ostream & os, const Trajectory & trajectory)
{
  const Index n = trajectory.final_state.size();
  const Index m = trajectory.samples.empty() ? 0 : trajectory.samples.front().u.size();
  os << "t";
  for (Index i = 1; i <= n; ++i) os << ",x" << i;
  for (Index i = 1; i <= m; ++i) os << ",u" << i;
  os << ",h,V,e,branch\n";
  for (const auto & s : trajectory.samples) {
    os << format_real(s.t);
    for (Index i = 0; i < s.x.size(); ++i) os << ',' << format_real(s.x[i]);
    for (Index i = 0; i < s.u.size(); ++i) os << ',' << format_real(s.u[i]);
    os << ',' << format_real(s.h) << ',' << format_real(s.v) << ',' << format_real(s.e) << ',' << s.branch << '\n';
  }
}

}  // namespace safestab
