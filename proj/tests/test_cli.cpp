#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <unistd.h>

#include "commands.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace safestab;

namespace {

struct Result
{
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args)
{
  args.insert(args.begin(), "safestab");
  std::vector<const char *> argv;
  for (const auto & a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test
{
protected:
  void SetUp() override
  {
    dir_ = fs::temp_directory_path() /
           ("safestab_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string & name, const std::string & text)
  {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  fs::path dir_;
};

const char * kSmall = R"(scenario: planar-v1
controllers:
  - {type: penalty, label: pen, mode: safety_hard, epsilon: 0.01}
  - {type: clf_cbf_qp, label: qp, p: 1}
initial_conditions:
  - [0, 9]
  - [-1.5, -1]
sim: {t_max: 3}
analysis: {nu: 2, radius_v: 0.4, radius_w: 0.8}
)";

const char * kCubic = R"(name: cubic
state_dim: 2
input_dim: 2
drift:
  - [[1.0, [1, 0]], [-0.1, [3, 0]]]
  - [[0.5, [0, 1]]]
actuation:
  - [[[1.0, [0, 0]]], []]
  - [[], [[1.0, [0, 0]]]]
clf: [[0.5, [2, 0]], [0.5, [0, 2]]]
clf_rate: [[1.0, [2, 0]], [1.0, [0, 2]]]
cbf: [[1.0, [2, 0]], [1.0, [0, 2]], [-8.0, [0, 1]], [12.0, [0, 0]]]
alpha: {linear: 1}
region: {half_width: 5}
)";

}  // namespace

TEST_F(CliTest, RunWritesOneCsvPerControllerAndState)
{
  const auto cfg = write("cfg.yaml", kSmall);
  const auto r = call({"run", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  for (const char * label : {"pen", "qp"}) {
    for (int k : {0, 1}) EXPECT_TRUE(fs::exists(dir_ / "out" / label / ("traj_" + std::to_string(k) + ".csv")));
    EXPECT_FALSE(fs::exists(dir_ / "out" / label / "traj_2.csv"));
  }
  EXPECT_EQ(slurp(dir_ / "out" / "config.yaml"), kSmall);
  const std::string manifest = slurp(dir_ / "out" / "manifest.txt");
  EXPECT_NE(manifest.find("certificate_issued = true"), std::string::npos);
  EXPECT_NE(manifest.find("controllers = pen,qp"), std::string::npos);
}

TEST_F(CliTest, SummaryCountsMatchOutcomes)
{
  const auto cfg = write("cfg.yaml", kSmall);
  ASSERT_EQ(call({"run", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"}).code, 0);
  const std::string summary = slurp(dir_ / "out" / "summary.txt");
  for (const char * label : {"pen", "qp"}) {
    std::map<std::string, int> seen;
    const std::regex outcome(std::string("^") + label + R"(\.traj_\d+\.outcome = (\w+)$)");
    const std::regex count(std::string("^") + label + R"(\.count\.(\w+) = (\d+)$)");
    std::map<std::string, int> reported;
    std::istringstream in(summary);
    std::string line;
    std::smatch m;
    while (std::getline(in, line)) {
      if (std::regex_match(line, m, outcome)) ++seen[m[1]];
      if (std::regex_match(line, m, count)) reported[m[1]] = std::stoi(m[2]);
    }
    int total = 0;
    for (const auto & [name, n] : reported) {
      EXPECT_EQ(n, seen[name]) << label << " " << name;
      total += n;
    }
    EXPECT_EQ(total, 2);
  }
  EXPECT_NE(summary.find("pen.traj_0.outcome = timeout"), std::string::npos);
  EXPECT_NE(summary.find("pen.traj_1.outcome = converged"), std::string::npos);
}

TEST_F(CliTest, EmptyControllerListFails)
{
  const auto cfg = write("cfg.yaml", "scenario: planar-v1\ncontrollers: []\ninitial_conditions: [[1, 1]]\n");
  const auto r = call({"run", cfg.string(), "--out", (dir_ / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no controllers configured"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownScenarioListsAvailable)
{
  const auto cfg = write("cfg.yaml", "scenario: planar-v7\ncontrollers: [{type: clf_cbf_qp}]\n");
  const auto r = call({"run", cfg.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown scenario 'planar-v7'"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("planar-v1"), std::string::npos);
  EXPECT_NE(r.err.find("cfg.yaml:1:"), std::string::npos);
}

TEST_F(CliTest, MalformedConfigIsLineAnchored)
{
  const auto bad_yaml = write("a.yaml", "scenario: planar-v1\ncontrollers:\n  - {type: penalty\n");
  auto r = call({"run", bad_yaml.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(std::regex_search(r.err, std::regex(R"(a\.yaml:\d+:\d+: )"))) << r.err;

  const auto bad_value = write("b.yaml", "scenario: planar-v1\ncontrollers:\n  - type: penalty\n    epsilon: -1\n");
  r = call({"run", bad_value.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("b.yaml:4:14: epsilon must be positive"), std::string::npos) << r.err;

  const auto bad_key = write("c.yaml", "scenario: planar-v1\ncontrollers: [{type: clf_cbf_qp}]\nsimm: {}\n");
  r = call({"run", bad_key.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("c.yaml:3:1: unknown key 'simm'"), std::string::npos) << r.err;
}

TEST_F(CliTest, ScenarioViolatingZeroDriftRejectedAtLoad)
{
  std::string table = kCubic;
  table.replace(table.find("[[0.5, [0, 1]]]"), 15, "[[0.5, [0, 1]], [0.2, [0, 0]]]");
  write("shifted.yaml", table);
  const auto cfg = write("cfg.yaml", "scenario: shifted.yaml\ncontrollers: [{type: clf_cbf_qp}]\n"
                                     "initial_conditions: [[1, 1]]\n");
  const auto r = call({"run", cfg.string(), "--out", (dir_ / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("scenario rejected"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(CliTest, PolynomialScenarioRunsAndPlots)
{
  write("cubic.yaml", kCubic);
  const auto cfg = write("cfg.yaml", "scenario: cubic.yaml\ncontrollers:\n"
                                     "  - {type: penalty, epsilon: 0.05}\n"
                                     "  - {type: safety_filter, nominal: {matrix: [[2, 0], [0, 2]]}}\n"
                                     "initial_conditions: [[1, -1], [-2, 0.5]]\nsim: {t_max: 4}\n");
  const auto r = call({"run", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "out" / "scenario.yaml"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "penalty-safety-hard" / "traj_1.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "safety-filter" / "traj_1.csv"));
  const auto p = call({"plot", (dir_ / "out").string(), "--quiet"});
  ASSERT_EQ(p.code, 0) << p.err;
  const std::string svg = slurp(dir_ / "out" / "phase.svg");
  EXPECT_NE(svg.find("#2ca02c"), std::string::npos);
}

TEST_F(CliTest, OverridesApply)
{
  const auto cfg = write("cfg.yaml", kSmall);
  const auto r = call({"run", cfg.string(), "--out", (dir_ / "o").string(), "--dt", "0.002", "--eps", "0.5",
                       "--seed", "9", "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string manifest = slurp(dir_ / "o" / "manifest.txt");
  EXPECT_NE(manifest.find("dt = 0.002"), std::string::npos);
  EXPECT_NE(manifest.find("seed = 9"), std::string::npos);
  // The second data row sits at t = dt.
  std::ifstream csv(dir_ / "o" / "pen" / "traj_1.csv");
  std::string line;
  std::getline(csv, line);
  std::getline(csv, line);
  std::getline(csv, line);
  EXPECT_EQ(line.substr(0, 6), "0.002,");

  EXPECT_EQ(call({"run", cfg.string(), "--eps", "-1"}).code, 1);
  EXPECT_EQ(call({"run", cfg.string(), "--dt", "0"}).code, 1);
}

TEST_F(CliTest, ControllerErrorsExitTwo)
{
  // Squaring this state overflows, so the first controller evaluation fails.
  const auto cfg = write("cfg.yaml", "scenario: planar-v1\ncontrollers: [{type: clf_cbf_qp}]\n"
                                     "initial_conditions: [[1.0e200, 1.0e200]]\nsim: {t_max: 1}\n");
  const auto r = call({"run", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(slurp(dir_ / "out" / "summary.txt").find("clf-cbf-qp.traj_0.outcome = aborted"), std::string::npos);
}

TEST_F(CliTest, AnalyzeIssuesCertificateAtLevelTwo)
{
  const auto cfg = write("cfg.yaml", kSmall);
  const auto r = call({"analyze", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string report = slurp(dir_ / "out" / "analysis.txt");
  for (const char * key : {"incompatible_samples = ", "n1 = ", "n2 = ", "n3 = ", "n4 = ", "epsilon_q1_bound = ",
                           "epsilon_q2_bound = ", "nu_star = ", "m1 = ", "m2 = ", "m3 = ", "m4 = ", "epsilon_bar = ",
                           "l1 = 0.5", "l2 = ", "epsilon_hat = ", "q1[0] = (0, 0) residual=", "q2[0] = (0, 6)"}) {
    EXPECT_NE(report.find(key), std::string::npos) << key;
  }
  EXPECT_NE(report.find("incompatible_free = true"), std::string::npos);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(report, m, std::regex(R"(epsilon_bar = (\S+))")));
  EXPECT_GT(std::stod(m[1]), 0.0);
}

TEST_F(CliTest, AnalyzeRefusesLevelNine)
{
  std::string text = kSmall;
  text.replace(text.find("nu: 2"), 5, "nu: 9");
  const auto cfg = write("cfg.yaml", text);
  const auto r = call({"analyze", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"});
  ASSERT_EQ(r.code, 3) << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.err, m, std::regex(R"(witness = \(([^,]+), ([^)]+)\))"))) << r.err;
  const double x1 = std::stod(m[1]);
  const double x2 = std::stod(m[2]);
  EXPECT_EQ(x1, 0.0);
  // On the incompatible axis: above the unsafe disk or below -2 sqrt(3).
  EXPECT_TRUE(x2 > 4.0 || x2 < -2.0 * std::sqrt(3.0)) << x2;
  EXPECT_NE(slurp(dir_ / "out" / "analysis.txt").find("certificate_issued = false"), std::string::npos);
}

TEST_F(CliTest, AnalyzeNeedsAnalysisBlock)
{
  const auto cfg = write("cfg.yaml", "scenario: planar-v1\ncontrollers: [{type: clf_cbf_qp}]\n");
  EXPECT_EQ(call({"analyze", cfg.string(), "--out", (dir_ / "out").string()}).code, 1);
}

TEST_F(CliTest, PlotEmptyDirectoryFails)
{
  fs::create_directories(dir_ / "empty");
  const auto r = call({"plot", (dir_ / "empty").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir_ / "empty" / "phase.svg"));
  EXPECT_EQ(call({"plot", (dir_ / "missing").string()}).code, 1);
}

TEST_F(CliTest, PlotRejectsNonPlanar)
{
  const char * cube = R"(name: cube
state_dim: 3
input_dim: 3
drift: [[], [], []]
actuation:
  - [[[1.0, [0, 0, 0]]], [], []]
  - [[], [[1.0, [0, 0, 0]]], []]
  - [[], [], [[1.0, [0, 0, 0]]]]
clf: [[0.5, [2, 0, 0]], [0.5, [0, 2, 0]], [0.5, [0, 0, 2]]]
clf_rate: [[1.0, [2, 0, 0]], [1.0, [0, 2, 0]], [1.0, [0, 0, 2]]]
cbf: [[-1.0, [1, 0, 0]], [3.0, [0, 0, 0]]]
region: {half_width: 4}
)";
  write("cube.yaml", cube);
  const auto cfg = write("cfg.yaml", "scenario: cube.yaml\ncontrollers: [{type: penalty}]\n"
                                     "initial_conditions: [[1, 1, 1]]\nsim: {t_max: 1}\n");
  ASSERT_EQ(call({"run", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"}).code, 0);
  const auto r = call({"plot", (dir_ / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("plotting supports planar scenarios only"), std::string::npos) << r.err;
}

TEST_F(CliTest, PlotSingleTrajectoryAndGeometry)
{
  const auto cfg = write("cfg.yaml", "scenario: planar-v1\ncontrollers: [{type: penalty}]\n"
                                     "initial_conditions: [[-1.5, -1]]\nanalysis: {nu: 2, radius_v: 0.4, radius_w: 0.8}\n");
  ASSERT_EQ(call({"run", cfg.string(), "--out", (dir_ / "out").string(), "--quiet"}).code, 0);
  ASSERT_EQ(call({"plot", (dir_ / "out").string(), "--quiet"}).code, 0);
  const std::string svg = slurp(dir_ / "out" / "phase.svg");
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("version=\"1.1\""), std::string::npos);

  std::size_t polylines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++polylines;
  EXPECT_EQ(polylines, 1u);

  // Region [-10, 10]^2 padded by 5% maps to 800 px: 1 unit = 800 / 22 px, origin at (400, 400).
  const double scale = 800.0 / 22.0;
  auto check_circle = [&](const std::string & color, double cx, double cy, double r) {
    const auto at = svg.find("stroke=\"" + color + "\"");
    ASSERT_NE(at, std::string::npos) << color;
    const auto start = svg.rfind("<path d=\"", at);
    const std::string d = svg.substr(start + 9, svg.find('"', start + 9) - start - 9);
    const std::regex pt(R"(([\d.]+) ([\d.]+))");
    int n = 0;
    for (auto it = std::sregex_iterator(d.begin(), d.end(), pt); it != std::sregex_iterator(); ++it, ++n) {
      const double x = (std::stod((*it)[1]) - 400.0) / scale;
      const double y = (400.0 - std::stod((*it)[2])) / scale;
      EXPECT_NEAR(std::hypot(x - cx, y - cy), r, 0.01) << color;
    }
    EXPECT_GT(n, 50);
  };
  check_circle("#2ca02c", 0.0, 4.0, 2.0);
  check_circle("#ff7f0e", 0.0, 0.0, 2.0);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
}

TEST_F(CliTest, RunAndPlotAreByteDeterministic)
{
  const auto cfg = write("cfg.yaml", kSmall);
  for (const char * d : {"a", "b"}) {
    ASSERT_EQ(call({"run", cfg.string(), "--out", (dir_ / d).string(), "--seed", "4", "--quiet"}).code, 0);
    ASSERT_EQ(call({"plot", (dir_ / d).string(), "--quiet"}).code, 0);
  }
  for (const char * f : {"pen/traj_0.csv", "pen/traj_1.csv", "qp/traj_0.csv", "qp/traj_1.csv", "summary.txt",
                         "manifest.txt", "phase.svg"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(CliTest, UsageErrors)
{
  EXPECT_EQ(call({}).code, 1);
  EXPECT_EQ(call({"frobnicate"}).code, 1);
  EXPECT_EQ(call({"run"}).code, 1);
  EXPECT_EQ(call({"run", (dir_ / "nope.yaml").string()}).code, 1);
  EXPECT_EQ(call({"--help"}).code, 0);
}

TEST(MarchingSquares, TracesCircle)
{
  const Box<double> box = Box<double>::symmetric(2, 3.0);
  const auto segs = cli::marching_squares([](const Eigen::Vector2d & p) { return p.squaredNorm() - 4.0; }, box, 61, 61);
  ASSERT_GT(segs.size(), 40u);
  for (const auto & s : segs) {
    EXPECT_NEAR(s.a.norm(), 2.0, 0.02);
    EXPECT_NEAR(s.b.norm(), 2.0, 0.02);
  }
  EXPECT_TRUE(cli::marching_squares([](const Eigen::Vector2d &) { return 1.0; }, box, 5, 5).empty());
}

TEST(MarchingSquares, SaddleCellsSplit)
{
  const Box<double> box{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)};
  const auto segs = cli::marching_squares([](const Eigen::Vector2d & p) { return p[0] * p[1]; }, box, 2, 2, 0.0);
  EXPECT_EQ(segs.size(), 2u);
}
