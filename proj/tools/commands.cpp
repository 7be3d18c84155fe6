#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "svg.hpp"

namespace safestab::cli {

namespace fs = std::filesystem;

namespace {

std::string point_str(const Eigen::VectorXd & x)
{
  std::string s = "(";
  for (Index i = 0; i < x.size(); ++i) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x[i]);
    s += (i ? ", " : "") + std::string(buf);
  }
  return s + ")";
}

std::string opt_real(const std::optional<double> & v)
{
  return v ? format_real(*v) : "none";
}

const char * yes_no(bool b)
{
  return b ? "true" : "false";
}

class KeyValueWriter
{
public:
  explicit KeyValueWriter(std::ostream & os) : os_(os) {}

  template <typename T>
  void operator()(const std::string & key, const T & value)
  {
    os_ << key << " = " << value << '\n';
  }
  void real(const std::string & key, double v) { (*this)(key, format_real(v)); }
  void comment(const std::string & text) { os_ << "# " << text << '\n'; }

private:
  std::ostream & os_;
};

void write_file(const fs::path & path, const std::string & content)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::map<std::string, std::string> read_key_values(const fs::path & path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

RoaOptions roa_options(const AnalysisSpec & a, bool with_limits)
{
  RoaOptions o;
  o.nu = a.nu;
  o.plan = a.plan;
  o.radius_v = a.radius_v;
  o.radius_w = a.radius_w;
  o.dep_tol = a.dep_tol;
  if (with_limits) o.limit_radii = a.limit_radii;
  return o;
}

}  // namespace

int cmd_run(const fs::path & config_path, const CommonFlags & flags, std::ostream & out, std::ostream & err)
{
  RunConfig cfg;
  try {
    cfg = load_config(config_path, flags.overrides);
  } catch (const ConfigError & e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  if (cfg.initial_conditions.empty()) {
    err << "error: " << cfg.path << ": no initial conditions configured\n";
    return kUsage;
  }

  const Scenario<double> & s = *cfg.scenario;
  const fs::path dir = cfg.output;
  try {
    fs::create_directories(dir);
    write_file(dir / "config.yaml", cfg.source_text);
    if (cfg.scenario_table) {
      YAML::Emitter em;
      em << *cfg.scenario_table;
      write_file(dir / "scenario.yaml", std::string(em.c_str()) + "\n");
    }
  } catch (const std::exception & e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  bool failed = false;
  std::ostringstream summary;
  KeyValueWriter sw(summary);
  sw("scenario", cfg.scenario_label);
  sw("initial_conditions", cfg.initial_conditions.size());
  std::map<std::string, std::size_t> totals;

  for (const auto & spec : cfg.controllers) {
    const fs::path cdir = dir / spec.label;
    std::map<std::string, std::size_t> counts;
    for (Outcome o : {Outcome::ConvergedToOrigin, Outcome::StuckAtEquilibrium, Outcome::SafetyViolated,
                      Outcome::TimedOut, Outcome::Aborted}) {
      counts[to_string(o)] = 0;
    }
    std::vector<Trajectory> trajectories;
    try {
      const Controller ctl = make_controller(s, spec);
      trajectories = batch_simulate(s, ctl, cfg.initial_conditions, cfg.sim);
    } catch (const std::exception & e) {
      err << "error: controller " << spec.label << ": " << e.what() << '\n';
      failed = true;
      continue;
    }

    try {
      fs::create_directories(cdir);
      for (std::size_t k = 0; k < trajectories.size(); ++k) {
        std::ostringstream csv;
        write_csv(csv, trajectories[k]);
        write_file(cdir / ("traj_" + std::to_string(k) + ".csv"), csv.str());
      }
    } catch (const std::exception & e) {
      err << "error: " << e.what() << '\n';
      return kUsage;
    }

    for (std::size_t k = 0; k < trajectories.size(); ++k) {
      const Trajectory & t = trajectories[k];
      const std::string key = spec.label + ".traj_" + std::to_string(k);
      ++counts[to_string(t.outcome)];
      ++totals[to_string(t.outcome)];
      sw(key + ".initial_state", point_str(cfg.initial_conditions[k]));
      sw(key + ".outcome", to_string(t.outcome));
      sw(key + ".final_state", point_str(t.final_state));
      sw(key + ".event_time", format_real(t.event_time));
      sw(key + ".min_h", format_real(t.min_h()));
      if (t.outcome == Outcome::Aborted) {
        sw(key + ".error", t.error);
        err << "error: " << spec.label << " traj_" << k << ": " << t.error << '\n';
        failed = true;
      }
    }
    for (const auto & [name, n] : counts) sw(spec.label + ".count." + name, n);
    if (!flags.quiet) {
      out << spec.label << ":";
      for (const auto & [name, n] : counts) out << ' ' << name << '=' << n;
      out << '\n';
    }
  }

  for (const auto & [name, n] : totals) sw("total.count." + name, n);

  // Certificate metadata lets `plot` draw the certified level set.
  bool issued = false;
  double nu = 0.0;
  if (cfg.analysis) {
    try {
      const RoaCertificate cert = roa_certify(s, roa_options(*cfg.analysis, false));
      issued = cert.issued;
      nu = cfg.analysis->nu;
    } catch (const std::exception & e) {
      err << "warning: certificate check failed: " << e.what() << '\n';
    }
  }

  std::ostringstream manifest;
  KeyValueWriter mw(manifest);
  mw("scenario", cfg.scenario_label);
  if (cfg.scenario_table) mw("scenario_file", "scenario.yaml");
  mw("state_dim", s.state_dim());
  mw("input_dim", s.input_dim());
  mw("seed", cfg.seed);
  mw("dt", format_real(cfg.sim.dt));
  std::string labels;
  for (const auto & c : cfg.controllers) labels += (labels.empty() ? "" : ",") + c.label;
  mw("controllers", labels);
  mw("trajectories_per_controller", cfg.initial_conditions.size());
  mw("certificate_issued", yes_no(issued));
  if (issued) mw("certificate_nu", format_real(nu));

  try {
    write_file(dir / "summary.txt", summary.str());
    write_file(dir / "manifest.txt", manifest.str());
  } catch (const std::exception & e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  if (!flags.quiet) out << "wrote " << dir.string() << '\n';
  return failed ? kSimulationError : kOk;
}

int cmd_analyze(const fs::path & config_path, const CommonFlags & flags, std::ostream & out, std::ostream & err)
{
  RunConfig cfg;
  try {
    cfg = load_config(config_path, flags.overrides);
  } catch (const ConfigError & e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  if (!cfg.analysis) {
    err << "error: " << cfg.path << ": config has no analysis block\n";
    return kUsage;
  }
  const Scenario<double> & s = *cfg.scenario;
  const AnalysisSpec & a = *cfg.analysis;

  std::ostringstream report;
  KeyValueWriter w(report);
  RoaCertificate cert;
  try {
    w("scenario", cfg.scenario_label);
    w("seed", cfg.seed);
    w.real("nu", a.nu);
    w.real("epsilon", a.epsilon);

    w.comment("incompatible points on the scan grid");
    const auto incompatible = incompatibility_scan(s, a.incompatibility_grid, a.dep_tol);
    w("incompatibility_grid", a.incompatibility_grid);
    w("incompatible_samples", incompatible.size());
    for (std::size_t i = 0; i < incompatible.size(); ++i) {
      w("incompatible_point[" + std::to_string(i) + "]", point_str(incompatible[i]));
    }

    w.comment("undesired equilibria");
    const EquilibriumScan eq = equilibrium_scan(s, a.epsilon, a.plan, a.equilibrium_radius);
    w.real("equilibrium_radius", a.equilibrium_radius);
    w.real("n1", eq.n1);
    w("n2", opt_real(eq.n2));
    w.real("n3", eq.n3);
    w("n4", opt_real(eq.n4));
    w.real("epsilon_q1_bound", eq.epsilon_q1_bound);
    w("epsilon_q2_bound", opt_real(eq.epsilon_q2_bound));
    auto candidates = [&](const char * name, const std::vector<EquilibriumCandidate> & list) {
      w(std::string(name) + "_count", list.size());
      for (std::size_t i = 0; i < list.size(); ++i) {
        const auto & c = list[i];
        w(std::string(name) + "[" + std::to_string(i) + "]",
          point_str(c.state) + " residual=" + format_real(c.residual) + " e=" + format_real(c.e_value) +
              " h=" + format_real(c.h));
      }
    };
    const std::vector<double> radii{2.0 * a.equilibrium_radius, a.equilibrium_radius, 0.5 * a.equilibrium_radius,
                                    0.25 * a.equilibrium_radius};
    const auto tradeoff = q1_tradeoff(s, a.plan, radii);
    for (std::size_t i = 0; i < tradeoff.size(); ++i) {
      const auto & t = tradeoff[i];
      w("q1_tradeoff[" + std::to_string(i) + "]", "radius=" + format_real(t.radius) + " n3=" + format_real(t.n3) +
                           " epsilon_bound=" + format_real(t.epsilon_bound));
    }
    candidates("q1", eq.q1_candidates);
    candidates("q2", eq.q2_candidates);

    w.comment("largest incompatibility-free level");
    const LevelBound level = largest_certified_level(s, a.plan, a.dep_tol);
    w.real("nu_raw", level.nu_raw);
    w.real("nu_boundary", level.nu_boundary);
    w.real("nu_star", level.nu_star);
    w.real("nu_max", level.nu_max);

    w.comment("region of attraction certificate");
    cert = roa_certify(s, roa_options(a, true));
    w("certificate_issued", yes_no(cert.issued));
    w("incompatible_free", yes_no(cert.incompatible_free));
    if (!cert.issued) w("refusal", cert.refusal);
    if (cert.witness) w("witness", point_str(*cert.witness));
    w("sample_count", cert.sample_count);
    w("incompatible_count", cert.incompatible_count);
    w("p_sample_count", cert.p_sample_count);
    w("standing_assumption_violations", cert.standing_assumption_violations.size());
    w.real("radius_v", cert.radius_v);
    w.real("radius_w", cert.radius_w);
    if (cert.issued) {
      w.real("m1", cert.m1);
      w.real("m2", cert.m2);
      w.real("m3", cert.m3);
      w.real("m4", cert.m4);
      w.real("epsilon_bar", cert.epsilon_bar);
      w.real("epsilon_w", cert.epsilon_w);
      w("degenerate", yes_no(cert.degenerate));
      w("l1", opt_real(cert.l1_estimate));
      w("l2", opt_real(cert.l2_estimate));
      w("epsilon_hat", opt_real(cert.epsilon_hat));
    }
  } catch (const std::exception & e) {
    err << "error: analysis failed: " << e.what() << '\n';
    return kUsage;
  }

  const fs::path dir = cfg.output;
  try {
    fs::create_directories(dir);
    write_file(dir / "analysis.txt", report.str());
  } catch (const std::exception & e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  if (!cert.issued) {
    err << "certificate refused: " << cert.refusal << '\n';
    if (cert.witness) {
      err << "witness = " << point_str(*cert.witness) << '\n';
      out << "witness = " << point_str(*cert.witness) << '\n';
    }
    return kRefused;
  }
  if (!flags.quiet) {
    out << "certificate issued for nu = " << format_real(a.nu) << ", epsilon_bar = " << format_real(cert.epsilon_bar)
        << ", epsilon_hat = " << opt_real(cert.epsilon_hat) << '\n';
    out << "wrote " << (dir / "analysis.txt").string() << '\n';
  }
  return kOk;
}

namespace {

struct CsvTrajectory
{
  std::size_t index;
  std::vector<Eigen::Vector2d> points;
};

std::vector<Eigen::Vector2d> read_planar_csv(const fs::path & path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto find = [&](const char * name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(path.string() + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  if (std::find(header.begin(), header.end(), "x3") != header.end()) {
    throw std::runtime_error("plotting supports planar scenarios only");
  }
  const std::size_t c1 = find("x1");
  const std::size_t c2 = find("x2");
  std::vector<Eigen::Vector2d> pts;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() <= std::max(c1, c2)) throw std::runtime_error(path.string() + ":" + std::to_string(row) + ": short row");
    pts.emplace_back(std::strtod(cells[c1].c_str(), nullptr), std::strtod(cells[c2].c_str(), nullptr));
  }
  return pts;
}

}  // namespace

int cmd_plot(const fs::path & run_dir, const CommonFlags & flags, std::ostream & out, std::ostream & err)
{
  if (!fs::is_directory(run_dir)) {
    err << "error: " << run_dir.string() << " is not a directory\n";
    return kUsage;
  }
  const fs::path manifest_path = run_dir / "manifest.txt";
  if (!fs::exists(manifest_path)) {
    err << "error: " << run_dir.string() << " contains no run (manifest.txt missing)\n";
    return kUsage;
  }

  try {
    const auto manifest = read_key_values(manifest_path);
    auto get = [&](const std::string & key) {
      const auto it = manifest.find(key);
      if (it == manifest.end()) throw std::runtime_error("manifest.txt lacks '" + key + "'");
      return it->second;
    };
    if (get("state_dim") != "2") {
      err << "error: plotting supports planar scenarios only\n";
      return kUsage;
    }

    std::shared_ptr<const Scenario<double>> scenario;
    if (manifest.count("scenario_file")) {
      const fs::path file = run_dir / get("scenario_file");
      scenario = scenario_from_table(YAML::LoadFile(file.string()), file.string());
    } else {
      scenario = builtin_scenario(get("scenario"));
      if (!scenario) throw std::runtime_error("unknown scenario '" + get("scenario") + "'");
    }
    const Scenario<double> & s = *scenario;

    std::vector<std::string> labels;
    {
      std::stringstream ss(get("controllers"));
      std::string label;
      while (std::getline(ss, label, ',')) labels.push_back(label);
    }

    std::vector<std::pair<std::string, std::vector<CsvTrajectory>>> runs;
    std::size_t total = 0;
    for (const auto & label : labels) {
      std::vector<CsvTrajectory> trajs;
      const fs::path cdir = run_dir / label;
      if (fs::is_directory(cdir)) {
        for (const auto & entry : fs::directory_iterator(cdir)) {
          const std::string name = entry.path().filename().string();
          if (name.rfind("traj_", 0) != 0 || entry.path().extension() != ".csv") continue;
          const std::string digits = name.substr(5, name.size() - 9);
          if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
          trajs.push_back({std::stoul(digits), read_planar_csv(entry.path())});
        }
      }
      std::sort(trajs.begin(), trajs.end(), [](const auto & a, const auto & b) { return a.index < b.index; });
      total += trajs.size();
      runs.emplace_back(label, std::move(trajs));
    }
    if (total == 0) {
      err << "error: " << run_dir.string() << " contains no trajectory CSVs\n";
      return kUsage;
    }

    static const char * palette[] = {"#1f77b4", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f"};
    const Box<double> & region = s.working_region();
    PhasePlot plot(region);
    auto field = [&](const ScalarCertificate<double> & c) {
      return [&c](const Eigen::Vector2d & p) { return c.value(Eigen::VectorXd(p)); };
    };
    plot.contour(marching_squares(field(s.cbf()), region, 241, 241), "#2ca02c", 2.0);
    const bool issued = manifest.count("certificate_issued") && manifest.at("certificate_issued") == "true";
    if (issued) {
      const double nu = std::stod(get("certificate_nu"));
      plot.contour(marching_squares(field(s.clf()), region, 241, 241, nu), "#ff7f0e", 2.0, "2,4");
    }

    std::vector<std::pair<std::string, std::string>> legend;
    for (std::size_t c = 0; c < runs.size(); ++c) {
      const std::string color = palette[c % (sizeof palette / sizeof *palette)];
      for (const auto & t : runs[c].second) plot.polyline(t.points, color);
      legend.emplace_back(runs[c].first, color);
    }
    for (std::size_t c = 0; c < runs.size(); ++c) {
      const std::string color = palette[c % (sizeof palette / sizeof *palette)];
      for (const auto & t : runs[c].second) {
        if (t.points.empty()) continue;
        plot.start_marker(t.points.front(), color);
        plot.end_marker(t.points.back(), color);
      }
    }
    legend.emplace_back("h = 0", "#2ca02c");
    if (issued) legend.emplace_back("V = " + manifest.at("certificate_nu"), "#ff7f0e");
    plot.legend(legend);
    plot.title(get("scenario"));

    const fs::path target = flags.overrides.out ? fs::path(*flags.overrides.out) : run_dir;
    fs::create_directories(target);
    std::ostringstream svg;
    plot.write(svg);
    write_file(target / "phase.svg", svg.str());
    if (!flags.quiet) out << "wrote " << (target / "phase.svg").string() << '\n';
  } catch (const std::exception & e) {
    const std::string what = e.what();
    err << "error: " << what << '\n';
    return kUsage;
  }
  return kOk;
}

int main_entry(int argc, const char * const * argv, std::ostream & out, std::ostream & err)
{
  CLI::App app{"Closed-form safe stabilization: simulate, analyze and plot"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonFlags flags;
  std::uint64_t seed = 0;
  std::string out_dir;
  double dt = 0.0;
  double eps = 0.0;
  auto * seed_opt = app.add_option("--seed", seed, "seed for sampled analyses");
  auto * out_opt = app.add_option("--out", out_dir, "output directory");
  auto * dt_opt = app.add_option("--dt", dt, "integration step override");
  auto * eps_opt = app.add_option("--eps", eps, "penalty parameter override");
  app.add_flag("--quiet", flags.quiet, "suppress progress output");

  std::string path;
  auto * run = app.add_subcommand("run", "simulate every configured controller from every initial condition");
  run->add_option("config", path, "config file")->required();
  auto * analyze = app.add_subcommand("analyze", "write analysis.txt for the configured scenario");
  analyze->add_option("config", path, "config file")->required();
  auto * plot = app.add_subcommand("plot", "render phase.svg from a run directory");
  plot->add_option("run_dir", path, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (*seed_opt) flags.overrides.seed = seed;
  if (*out_opt) flags.overrides.out = out_dir;
  if (*dt_opt) flags.overrides.dt = dt;
  if (*eps_opt) flags.overrides.eps = eps;

  if (*run) return cmd_run(path, flags, out, err);
  if (*analyze) return cmd_analyze(path, flags, out, err);
  return cmd_plot(path, flags, out, err);
}

}  // namespace safestab::cli
