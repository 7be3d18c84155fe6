#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "safestab/controllers.hpp"
#include "safestab/systems.hpp"

namespace safestab {

struct SimConfig
{
  double dt = 1e-3;
  double t_max = 20.0;
  double convergence_radius = 1e-3;
  double stagnation_speed = 1e-4;
  double stagnation_window = 0.5;
  double safety_tolerance = 1e-6;  ///< h below minus this is a violation
  bool zero_order_hold = false;    ///< hold u over each step instead of re-evaluating at RK4 stages

  void validate() const;
};

/// One controller evaluation: the input plus diagnostics for the trajectory record.
struct ControlSample
{
  Eigen::VectorXd u;
  double e = std::numeric_limits<double>::quiet_NaN();
  std::string branch;
};

using Controller = std::function<ControlSample(const Eigen::VectorXd &)>;

Controller make_penalty_controller(const Scenario<double> & scenario, const PenaltyConfig<double> & config);

/// Penalty feedback computed on the nominal adaptation and applied as u = v + u_nom(x).
Controller make_penalty_controller(const Scenario<double> & scenario, const PenaltyConfig<double> & config,
                                   std::function<Eigen::VectorXd(const Eigen::VectorXd &)> u_nom);

Controller make_clf_cbf_qp_controller(const Scenario<double> & scenario, double p);

Controller make_safety_filter_controller(const Scenario<double> & scenario,
                                         std::function<Eigen::VectorXd(const Eigen::VectorXd &)> u_nom);

enum class Outcome
{
  ConvergedToOrigin,
  StuckAtEquilibrium,
  SafetyViolated,
  TimedOut,
  Aborted,  ///< the controller or the dynamics failed; see Trajectory::error
};

const char * to_string(Outcome o);

struct TrajectorySample
{
  double t;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  double h;
  double v;
  double e;
  std::string branch;
};

struct Trajectory
{
  std::vector<TrajectorySample> samples;
  Outcome outcome = Outcome::TimedOut;
  Eigen::VectorXd final_state;  ///< last recorded state, or the failing state when aborted
  double event_time = 0.0;
  std::string error;

  double min_h() const;
};

/**
 * Fixed-step RK4 on xdot = f(x) + g(x) u(x), with samples at t_k = k dt.
 * After each sample the events are checked in order: convergence to the
 * origin, safety violation, stagnation away from the origin for a full
 * window, and the time limit.
 */
Trajectory simulate(const Scenario<double> & scenario, const Controller & controller, const Eigen::VectorXd & x0,
                    const SimConfig & config);

/// One trajectory per initial condition, in input order; failures are isolated per trajectory.
std::vector<Trajectory> batch_simulate(const Scenario<double> & scenario, const Controller & controller,
                                       const std::vector<Eigen::VectorXd> & initial_conditions,
                                       const SimConfig & config);

/// CSV with header t,x1..xn,u1..um,h,V,e,branch and 17 significant digits.
void write_csv(std::ostream & os, const Trajectory & trajectory);

std::string format_real(double value);

}  // namespace safestab
