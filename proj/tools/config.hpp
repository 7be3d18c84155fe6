#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "safestab/safestab.hpp"

namespace safestab::cli {

/// Malformed or inconsistent config; the message already carries file:line:column.
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

enum class ControllerKind
{
  Penalty,
  ClfCbfQp,
  SafetyFilter,
};

struct ControllerSpec
{
  std::string label;
  ControllerKind kind = ControllerKind::Penalty;
  PenaltyConfig<double> penalty;
  double p = 1.0;
  std::optional<Eigen::MatrixXd> nominal_gain;  ///< u_nom(x) = -K x
};

struct AnalysisSpec
{
  double nu = 1.0;
  double epsilon = 0.01;
  SamplingPlan plan;
  double radius_v = 0.05;
  double radius_w = 0.1;
  std::vector<double> limit_radii{0.4, 0.1, 0.01, 0.001};
  double equilibrium_radius = 0.5;
  int incompatibility_grid = 401;
  double dep_tol = 1e-8;
};

struct RunConfig
{
  std::string path;
  std::string source_text;
  std::string scenario_label;        ///< built-in name, or the table's name
  std::optional<YAML::Node> scenario_table;
  std::shared_ptr<const Scenario<double>> scenario;
  std::vector<ControllerSpec> controllers;
  std::vector<Eigen::VectorXd> initial_conditions;
  SimConfig sim;
  std::optional<AnalysisSpec> analysis;
  std::string output = "out";
  std::uint64_t seed = 1;
};

struct Overrides
{
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> dt;
  std::optional<double> eps;
};

std::vector<std::string> builtin_scenarios();

/// Parses a config file, resolves its scenario and applies command-line overrides.
RunConfig load_config(const std::filesystem::path & path, const Overrides & overrides = {});

/// Builds a scenario from a polynomial table node; `where` prefixes error messages.
std::shared_ptr<const Scenario<double>> scenario_from_table(const YAML::Node & node, const std::string & where);

/// Resolves "planar-v1" and other built-in names.
std::shared_ptr<const Scenario<double>> builtin_scenario(const std::string & name);

Controller make_controller(const Scenario<double> & scenario, const ControllerSpec & spec);

}  // namespace safestab::cli
