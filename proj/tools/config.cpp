#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace safestab::cli {

namespace {

std::string anchor(const std::string & where, const YAML::Mark & mark)
{
  if (mark.is_null()) return where + ": ";
  return where + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1) + ": ";
}

[[noreturn]] void fail(const std::string & where, const YAML::Node & node, const std::string & msg)
{
  throw ConfigError(anchor(where, node.Mark()) + msg);
}

void check_keys(const std::string & where, const YAML::Node & map, const std::set<std::string> & allowed)
{
  if (!map.IsMap()) fail(where, map, "expected a table");
  for (const auto & kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(where, kv.first, "unknown key '" + key + "'");
  }
}

double real(const std::string & where, const YAML::Node & node)
{
  if (!node.IsScalar()) fail(where, node, "expected a number");
  try {
    return node.as<double>();
  } catch (const YAML::Exception &) {
    fail(where, node, "expected a number, got '" + node.Scalar() + "'");
  }
}

long long integer(const std::string & where, const YAML::Node & node)
{
  if (!node.IsScalar()) fail(where, node, "expected an integer");
  try {
    return node.as<long long>();
  } catch (const YAML::Exception &) {
    fail(where, node, "expected an integer, got '" + node.Scalar() + "'");
  }
}

std::string text(const std::string & where, const YAML::Node & node)
{
  if (!node.IsScalar()) fail(where, node, "expected a string");
  return node.Scalar();
}

bool boolean(const std::string & where, const YAML::Node & node)
{
  if (!node.IsScalar()) fail(where, node, "expected true or false");
  try {
    return node.as<bool>();
  } catch (const YAML::Exception &) {
    fail(where, node, "expected true or false, got '" + node.Scalar() + "'");
  }
}

double positive(const std::string & where, const YAML::Node & node, const char * what)
{
  const double v = real(where, node);
  if (!(v > 0.0)) fail(where, node, std::string(what) + " must be positive");
  return v;
}

Eigen::VectorXd vector(const std::string & where, const YAML::Node & node)
{
  if (!node.IsSequence()) fail(where, node, "expected a list of numbers");
  Eigen::VectorXd v(static_cast<Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) v[static_cast<Index>(i)] = real(where, node[i]);
  return v;
}

Eigen::MatrixXd matrix(const std::string & where, const YAML::Node & node)
{
  if (!node.IsSequence() || node.size() == 0) fail(where, node, "expected a list of rows");
  const std::size_t cols = node[0].IsSequence() ? node[0].size() : 0;
  Eigen::MatrixXd m(static_cast<Index>(node.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < node.size(); ++i) {
    const Eigen::VectorXd row = vector(where, node[i]);
    if (static_cast<std::size_t>(row.size()) != cols) fail(where, node[i], "rows must have equal length");
    m.row(static_cast<Index>(i)) = row.transpose();
  }
  return m;
}

// A polynomial is a list of [coefficient, [exponents...]] terms; an empty list is zero.
Polynomial<double> polynomial(const std::string & where, const YAML::Node & node, Index dim)
{
  if (!node.IsSequence()) fail(where, node, "expected a list of [coefficient, [exponents]] terms");
  std::vector<Monomial<double>> terms;
  for (const auto & term : node) {
    if (!term.IsSequence() || term.size() != 2 || !term[1].IsSequence()) {
      fail(where, term, "a term is [coefficient, [exponents]]");
    }
    Monomial<double> mono{real(where, term[0]), {}};
    for (const auto & e : term[1]) {
      const long long k = integer(where, e);
      if (k < 0 || k > 64) fail(where, e, "exponents must lie in 0..64");
      mono.exponents.push_back(static_cast<int>(k));
    }
    if (static_cast<Index>(mono.exponents.size()) != dim) {
      fail(where, term[1], "expected " + std::to_string(dim) + " exponents");
    }
    terms.push_back(std::move(mono));
  }
  return Polynomial<double>(dim, std::move(terms));
}

ClassKFunction<double> class_k(const std::string & where, const YAML::Node & node)
{
  check_keys(where, node, {"linear", "power_law"});
  if (node["linear"]) return ClassKFunction<double>::linear(positive(where, node["linear"], "linear slope"));
  if (node["power_law"]) {
    const auto & p = node["power_law"];
    if (!p.IsSequence() || p.size() != 2) fail(where, p, "power_law is [coefficient, exponent]");
    return ClassKFunction<double>::power_law(positive(where, p[0], "coefficient"), positive(where, p[1], "exponent"));
  }
  fail(where, node, "alpha needs 'linear' or 'power_law'");
}

Box<double> region(const std::string & where, const YAML::Node & node, Index n)
{
  check_keys(where, node, {"half_width", "lower", "upper"});
  Box<double> box;
  if (node["half_width"]) {
    box = Box<double>::symmetric(n, positive(where, node["half_width"], "half_width"));
  } else {
    if (!node["lower"] || !node["upper"]) fail(where, node, "region needs half_width or lower/upper");
    box.lower = vector(where, node["lower"]);
    box.upper = vector(where, node["upper"]);
    if (box.lower.size() != n || box.upper.size() != n) fail(where, node, "region bounds need one entry per state");
    if (!(box.lower.array() < box.upper.array()).all()) fail(where, node, "region lower must be below upper");
  }
  return box;
}

ControllerSpec controller(const std::string & where, const YAML::Node & node, const Scenario<double> & s)
{
  check_keys(where, node, {"type", "label", "mode", "epsilon", "p", "nominal"});
  if (!node["type"]) fail(where, node, "controller needs a type");
  const std::string type = text(where, node["type"]);
  ControllerSpec spec;
  if (type == "penalty") {
    spec.kind = ControllerKind::Penalty;
    const std::string mode = node["mode"] ? text(where, node["mode"]) : "safety_hard";
    if (mode == "safety_hard") {
      spec.penalty.mode = PenaltyMode::SafetyHard;
    } else if (mode == "stability_hard") {
      spec.penalty.mode = PenaltyMode::StabilityHard;
    } else {
      fail(where, node["mode"], "mode must be safety_hard or stability_hard");
    }
    if (node["epsilon"]) spec.penalty.epsilon = positive(where, node["epsilon"], "epsilon");
    spec.label = "penalty-" + std::string(mode == "safety_hard" ? "safety-hard" : "stability-hard");
  } else if (type == "clf_cbf_qp") {
    spec.kind = ControllerKind::ClfCbfQp;
    if (node["p"]) spec.p = positive(where, node["p"], "p");
    spec.label = "clf-cbf-qp";
  } else if (type == "safety_filter") {
    spec.kind = ControllerKind::SafetyFilter;
    if (!node["nominal"]) fail(where, node, "safety_filter needs a nominal controller");
    spec.label = "safety-filter";
  } else {
    fail(where, node["type"], "unknown controller type '" + type + "' (penalty, clf_cbf_qp, safety_filter)");
  }

  if (node["nominal"]) {
    const auto & nom = node["nominal"];
    check_keys(where, nom, {"gain", "matrix"});
    if (nom["gain"]) {
      if (s.input_dim() != s.state_dim()) fail(where, nom, "scalar gain needs as many inputs as states");
      spec.nominal_gain = real(where, nom["gain"]) * Eigen::MatrixXd::Identity(s.input_dim(), s.state_dim());
    } else if (nom["matrix"]) {
      const Eigen::MatrixXd k = matrix(where, nom["matrix"]);
      if (k.rows() != s.input_dim() || k.cols() != s.state_dim()) fail(where, nom["matrix"], "gain matrix must be m x n");
      spec.nominal_gain = k;
    } else {
      fail(where, nom, "nominal needs gain or matrix");
    }
  }

  if (node["label"]) {
    spec.label = text(where, node["label"]);
    const bool ok = !spec.label.empty() && spec.label.find_first_not_of(
                                               "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") ==
                                               std::string::npos;
    if (!ok || spec.label == "." || spec.label == "..") fail(where, node["label"], "label may use only [A-Za-z0-9_.-]");
  }
  return spec;
}

SimConfig sim_config(const std::string & where, const YAML::Node & node)
{
  check_keys(where, node, {"dt", "t_max", "convergence_radius", "stagnation_speed", "stagnation_window",
                           "safety_tolerance", "zero_order_hold"});
  SimConfig sim;
  if (node["dt"]) sim.dt = real(where, node["dt"]);
  if (node["t_max"]) sim.t_max = real(where, node["t_max"]);
  if (node["convergence_radius"]) sim.convergence_radius = real(where, node["convergence_radius"]);
  if (node["stagnation_speed"]) sim.stagnation_speed = real(where, node["stagnation_speed"]);
  if (node["stagnation_window"]) sim.stagnation_window = real(where, node["stagnation_window"]);
  if (node["safety_tolerance"]) sim.safety_tolerance = real(where, node["safety_tolerance"]);
  if (node["zero_order_hold"]) sim.zero_order_hold = boolean(where, node["zero_order_hold"]);
  try {
    sim.validate();
  } catch (const ConfigurationError & e) {
    fail(where, node, e.what());
  }
  return sim;
}

AnalysisSpec analysis_spec(const std::string & where, const YAML::Node & node)
{
  check_keys(where, node, {"nu", "epsilon", "grid_resolution", "random_samples", "boundary_samples", "radius_v",
                           "radius_w", "limit_radii", "equilibrium_radius", "incompatibility_grid", "dep_tol"});
  AnalysisSpec a;
  if (node["nu"]) a.nu = positive(where, node["nu"], "nu");
  if (node["epsilon"]) a.epsilon = positive(where, node["epsilon"], "epsilon");
  auto count = [&](const char * key, int & dst, long long lo) {
    if (!node[key]) return;
    const long long v = integer(where, node[key]);
    if (v < lo || v > 100000) fail(where, node[key], std::string(key) + " is out of range");
    dst = static_cast<int>(v);
  };
  count("grid_resolution", a.plan.grid_resolution, 3);
  count("random_samples", a.plan.random_samples, 0);
  count("boundary_samples", a.plan.boundary_samples, 0);
  count("incompatibility_grid", a.incompatibility_grid, 3);
  if (node["radius_v"]) a.radius_v = positive(where, node["radius_v"], "radius_v");
  if (node["radius_w"]) a.radius_w = positive(where, node["radius_w"], "radius_w");
  if (node["equilibrium_radius"]) a.equilibrium_radius = positive(where, node["equilibrium_radius"], "equilibrium_radius");
  if (node["dep_tol"]) a.dep_tol = positive(where, node["dep_tol"], "dep_tol");
  if (node["limit_radii"]) {
    const Eigen::VectorXd r = vector(where, node["limit_radii"]);
    a.limit_radii.assign(r.data(), r.data() + r.size());
    for (std::size_t i = 0; i < a.limit_radii.size(); ++i) {
      if (!(a.limit_radii[i] > 0.0) || (i > 0 && !(a.limit_radii[i] < a.limit_radii[i - 1]))) {
        fail(where, node["limit_radii"], "limit_radii must be positive and strictly decreasing");
      }
    }
  }
  return a;
}

}  // namespace

std::vector<std::string> builtin_scenarios()
{
  return {"planar-v1"};
}

std::shared_ptr<const Scenario<double>> builtin_scenario(const std::string & name)
{
  if (name == "planar-v1") return std::make_shared<const Scenario<double>>(build_planar_example<double>());
  return nullptr;
}

std::shared_ptr<const Scenario<double>> scenario_from_table(const YAML::Node & node, const std::string & where)
{
  check_keys(where, node, {"name", "state_dim", "input_dim", "drift", "actuation", "clf", "clf_rate", "cbf", "alpha",
                           "region", "origin_tolerance"});
  for (const char * key : {"state_dim", "input_dim", "drift", "actuation", "clf", "clf_rate", "cbf", "region"}) {
    if (!node[key]) fail(where, node, std::string("scenario table needs '") + key + "'");
  }
  PolynomialSystem<double> sys;
  sys.name = node["name"] ? text(where, node["name"]) : "custom";
  const long long n = integer(where, node["state_dim"]);
  const long long m = integer(where, node["input_dim"]);
  if (n < 1 || n > 64) fail(where, node["state_dim"], "state_dim must lie in 1..64");
  if (m < 1 || m > 64) fail(where, node["input_dim"], "input_dim must lie in 1..64");
  sys.state_dim = static_cast<Index>(n);
  sys.input_dim = static_cast<Index>(m);

  const auto & drift = node["drift"];
  if (!drift.IsSequence() || static_cast<long long>(drift.size()) != n) fail(where, drift, "drift needs one polynomial per state");
  for (const auto & p : drift) sys.drift.push_back(polynomial(where, p, sys.state_dim));

  const auto & act = node["actuation"];
  if (!act.IsSequence() || static_cast<long long>(act.size()) != n) fail(where, act, "actuation needs one row per state");
  for (const auto & row : act) {
    if (!row.IsSequence() || static_cast<long long>(row.size()) != m) fail(where, row, "actuation row needs one polynomial per input");
    std::vector<Polynomial<double>> r;
    for (const auto & p : row) r.push_back(polynomial(where, p, sys.state_dim));
    sys.actuation.push_back(std::move(r));
  }
  sys.clf = polynomial(where, node["clf"], sys.state_dim);
  sys.clf_rate = polynomial(where, node["clf_rate"], sys.state_dim);
  sys.cbf = polynomial(where, node["cbf"], sys.state_dim);
  if (node["alpha"]) sys.alpha = class_k(where, node["alpha"]);
  sys.working_region = region(where, node["region"], sys.state_dim);
  if (node["origin_tolerance"]) sys.origin_tolerance = positive(where, node["origin_tolerance"], "origin_tolerance");
  try {
    return std::make_shared<const Scenario<double>>(make_polynomial_scenario(std::move(sys)));
  } catch (const Error & e) {
    fail(where, node, std::string("scenario rejected: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path & path, const Overrides & overrides)
{
  RunConfig cfg;
  cfg.path = path.string();
  const std::string & where = cfg.path;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(where + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    cfg.source_text = ss.str();
  }

  YAML::Node root;
  try {
    root = YAML::Load(cfg.source_text);
  } catch (const YAML::ParserException & e) {
    throw ConfigError(anchor(where, e.mark) + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(where + ":1:1: config must be a table");
  check_keys(where, root, {"scenario", "controllers", "initial_conditions", "sim", "analysis", "output", "seed"});

  if (!root["scenario"]) throw ConfigError(where + ":1:1: missing 'scenario'");
  const YAML::Node sc = root["scenario"];
  if (sc.IsScalar()) {
    const std::string name = sc.Scalar();
    cfg.scenario = builtin_scenario(name);
    cfg.scenario_label = name;
    if (!cfg.scenario) {
      const std::filesystem::path file = path.parent_path() / name;
      const bool looks_like_file = file.extension() == ".yaml" || file.extension() == ".yml";
      if (!looks_like_file || !std::filesystem::exists(file)) {
        std::string list;
        for (const auto & b : builtin_scenarios()) list += (list.empty() ? "" : ", ") + b;
        fail(where, sc, "unknown scenario '" + name + "'; available: " + list + " (or a .yaml polynomial table)");
      }
      YAML::Node table;
      try {
        table = YAML::LoadFile(file.string());
      } catch (const YAML::Exception & e) {
        throw ConfigError(anchor(file.string(), e.mark) + e.msg);
      }
      cfg.scenario = scenario_from_table(table, file.string());
      cfg.scenario_table = table;
      cfg.scenario_label = cfg.scenario->name();
    }
  } else {
    cfg.scenario = scenario_from_table(sc, where);
    cfg.scenario_table = sc;
    cfg.scenario_label = cfg.scenario->name();
  }
  const Scenario<double> & s = *cfg.scenario;

  const YAML::Node ctl = root["controllers"];
  if (!ctl || (ctl.IsSequence() && ctl.size() == 0) || ctl.IsNull()) {
    fail(where, ctl ? ctl : root, "no controllers configured");
  }
  if (!ctl.IsSequence()) fail(where, ctl, "controllers must be a list");
  std::set<std::string> labels;
  for (const auto & c : ctl) {
    cfg.controllers.push_back(controller(where, c, s));
    if (!labels.insert(cfg.controllers.back().label).second) {
      fail(where, c, "duplicate controller label '" + cfg.controllers.back().label + "'");
    }
  }

  if (const YAML::Node ics = root["initial_conditions"]) {
    if (!ics.IsSequence()) fail(where, ics, "initial_conditions must be a list of states");
    for (const auto & ic : ics) {
      Eigen::VectorXd x = vector(where, ic);
      if (x.size() != s.state_dim()) fail(where, ic, "initial condition needs " + std::to_string(s.state_dim()) + " entries");
      cfg.initial_conditions.push_back(std::move(x));
    }
  }
  if (root["sim"]) cfg.sim = sim_config(where, root["sim"]);
  if (root["analysis"]) cfg.analysis = analysis_spec(where, root["analysis"]);
  if (root["output"]) cfg.output = text(where, root["output"]);
  if (root["seed"]) {
    const long long seed = integer(where, root["seed"]);
    if (seed < 0) fail(where, root["seed"], "seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);
  }

  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.out) cfg.output = *overrides.out;
  if (overrides.dt) {
    cfg.sim.dt = *overrides.dt;
    try {
      cfg.sim.validate();
    } catch (const ConfigurationError & e) {
      throw ConfigError(std::string("--dt: ") + e.what());
    }
  }
  if (overrides.eps) {
    if (!(*overrides.eps > 0.0)) throw ConfigError("--eps: penalty parameter must be positive");
    for (auto & c : cfg.controllers) c.penalty.epsilon = *overrides.eps;
    if (cfg.analysis) cfg.analysis->epsilon = *overrides.eps;
  }
  if (cfg.analysis) cfg.analysis->plan.seed = cfg.seed;
  return cfg;
}

Controller make_controller(const Scenario<double> & scenario, const ControllerSpec & spec)
{
  std::function<Eigen::VectorXd(const Eigen::VectorXd &)> nominal;
  if (spec.nominal_gain) {
    nominal = [k = *spec.nominal_gain](const Eigen::VectorXd & x) -> Eigen::VectorXd { return -(k * x); };
  }
  switch (spec.kind) {
    case ControllerKind::Penalty:
      return nominal ? make_penalty_controller(scenario, spec.penalty, nominal)
                     : make_penalty_controller(scenario, spec.penalty);
    case ControllerKind::ClfCbfQp: return make_clf_cbf_qp_controller(scenario, spec.p);
    case ControllerKind::SafetyFilter: return make_safety_filter_controller(scenario, nominal);
  }
  throw ConfigurationError("unknown controller kind");
}

}  // namespace safestab::cli
