#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "quadmpc/csv.hpp"
#include "quadmpc/harness.hpp"

namespace quadmpc {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() /
              ("quadmpc_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig short_config(double duration) {
  ExperimentConfig c;
  c.duration = duration;
  return c;
}

// --- config --------------------------------------------------------------------

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.duration = 3.0;
  c.variants = {Variant::Decoupled};
  c.initial_offset = Vec3(0.5, -0.25, 2.0);
  c.seed = 42;
  const ExperimentConfig d = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(c.to_json().dump(), d.to_json().dump());
}

TEST(Config, PartialFileKeepsDefaults) {
  const ExperimentConfig c = ExperimentConfig::from_json(
      nlohmann::json::parse(R"({"duration": 2.0, "plant": {"Tmax": 40.0}})"));
  EXPECT_EQ(c.duration, 2.0);
  EXPECT_EQ(c.plant.Tmax, 40.0);
  EXPECT_EQ(c.horizon, 20);
  EXPECT_EQ(c.samples(), 40);
  EXPECT_NEAR(c.plant.J(1, 1), 2.1e-3, 1e-15);
}

TEST(Config, DiagonalMatricesAccepted) {
  const ExperimentConfig c = ExperimentConfig::from_json(nlohmann::json::parse(
      R"({"Q": [100,1,1,1,100,1,1,1,80,1,1,1], "R": [0.01, 0.01, 0.1]})"));
  EXPECT_EQ(c.Q(8, 8), 80.0);
  EXPECT_EQ(c.Q(0, 1), 0.0);
  EXPECT_EQ(c.R(2, 2), 0.1);
}

TEST(Config, RejectsInvalidInput) {
  using nlohmann::json;
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"horizn": 20})")), InvalidArgument);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"plant": {"mass": 1}})")),
               InvalidArgument);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"h": -0.05})")), InvalidArgument);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"duration": 1.01})")),
               InvalidArgument);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"Q": [1, 2, 3]})")), InvalidArgument);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"variants": ["fast"]})")),
               InvalidArgument);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"trajectory": {"type": "loop"}})")),
               InvalidArgument);
}

TEST(Config, LoadFromFile) {
  TempDir dir("config");
  const fs::path f = dir.path() / "c.json";
  std::ofstream(f) << R"({"variants": ["baseline"], "duration": 1.5})";
  const ExperimentConfig c = ExperimentConfig::load(f);
  ASSERT_EQ(c.variants.size(), 1u);
  EXPECT_EQ(c.variants[0], Variant::Baseline);
  EXPECT_THROW(ExperimentConfig::load(dir.path() / "missing.json"), InvalidArgument);
}

// --- closed loop -------------------------------------------------------------------

TEST(ClosedLoop, HoverEquilibriumHasZeroError) {
  ExperimentConfig c = short_config(5.0);
  c.trajectory = "hover";
  c.initial_offset = Vec3::Zero();
  const RunMetrics m = run_closed_loop(c, Variant::Coupled);
  EXPECT_LE(m.rmse_combined, 1e-3);
  EXPECT_EQ(m.unconverged_solves, 0);
  EXPECT_NEAR(m.min_thrust, c.plant.g, 1e-6);
}

TEST(ClosedLoop, InfeasibleReferenceIsReported) {
  ExperimentConfig c = short_config(1.0);
  c.trajectory_scale = 3.0;
  EXPECT_THROW(run_closed_loop(c, Variant::Coupled), InfeasibleReference);
}

TEST(ClosedLoop, RerunIsBitExact) {
  TempDir a("rerun_a"), b("rerun_b");
  ExperimentConfig c = short_config(2.0);
  c.output_dir = a.path();
  run_closed_loop(c, Variant::Coupled);
  c.output_dir = b.path();
  run_closed_loop(c, Variant::Coupled);
  for (const char* name : {"states.csv", "reference.csv", "constraints.csv"}) {
    const std::string x = slurp(a.path() / name);
    EXPECT_FALSE(x.empty()) << name;
    EXPECT_TRUE(x == slurp(b.path() / name)) << name;
  }
  const CsvTable da = read_csv(a.path() / "mpc_diag.csv");
  const CsvTable db = read_csv(b.path() / "mpc_diag.csv");
  ASSERT_EQ(da.rows.size(), db.rows.size());
  const std::size_t skip = da.col("solve_time");
  for (std::size_t r = 0; r < da.rows.size(); ++r) {
    for (std::size_t k = 0; k < da.columns.size(); ++k) {
      if (k != skip) EXPECT_EQ(da.rows[r][k], db.rows[r][k]);
    }
  }
}

TEST(ClosedLoop, LogsHaveDocumentedColumns) {
  TempDir dir("columns");
  ExperimentConfig c = short_config(0.5);
  c.output_dir = dir.path();
  run_closed_loop(c, Variant::Decoupled);
  EXPECT_EQ(read_csv(dir.path() / "states.csv").columns, state_columns());
  EXPECT_EQ(read_csv(dir.path() / "reference.csv").columns, reference_columns());
  EXPECT_EQ(read_csv(dir.path() / "mpc_diag.csv").columns, diag_columns());
  EXPECT_EQ(read_csv(dir.path() / "constraints.csv").columns, constraint_columns());
  const CsvTable s = read_csv(dir.path() / "states.csv");
  EXPECT_EQ(s.rows.size(), 10u * 50u);
  EXPECT_TRUE(fs::exists(dir.path() / "metrics.json"));
}

TEST(ClosedLoop, DecoupledTracesStayInsideAxisBand) {
  TempDir dir("decoupled");
  ExperimentConfig c = short_config(5.0);
  c.output_dir = dir.path();
  run_closed_loop(c, Variant::Decoupled);
  const CsvTable s = read_csv(dir.path() / "states.csv");
  const std::size_t rho = s.col("rho");
  double worst = -1e300;
  for (const auto& row : s.rows) {
    for (const char* col : {"ad_x", "ad_y", "ad_z"}) {
      worst = std::max(worst, std::abs(row[s.col(col)]) - row[rho] / std::sqrt(3.0));
    }
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(ClosedLoop, AuditPassesAndDetectsTampering) {
  TempDir dir("audit");
  ExperimentConfig c = short_config(2.0);
  c.output_dir = dir.path();
  run_closed_loop(c, Variant::Coupled);
  const AuditReport ok = audit_run(dir.path());
  for (const auto& chk : ok.checks) EXPECT_TRUE(chk.passed) << chk.name << " " << chk.worst;
  EXPECT_TRUE(ok.passed());

  // Push one thrust sample above the limit.
  CsvTable s = read_csv(dir.path() / "states.csv");
  s.rows[7][s.col("T")] = 50.0;
  {
    CsvWriter w(dir.path() / "states.csv", s.columns);
    for (const auto& r : s.rows) w.row(r);
  }
  EXPECT_FALSE(audit_run(dir.path()).passed());
}

TEST(Compare, ReportHasOneRowPerVariant) {
  TempDir dir("compare");
  ExperimentConfig c = short_config(1.0);
  c.output_dir = dir.path();
  const auto outcomes = compare_variants(c);
  ASSERT_EQ(outcomes.size(), 3u);
  for (const auto& o : outcomes) {
    ASSERT_TRUE(o.metrics.has_value()) << o.error;
    EXPECT_TRUE(fs::exists(dir.path() / to_string(o.variant) / "states.csv"));
  }
  const std::string table = slurp(dir.path() / "comparison.csv");
  EXPECT_EQ(line_count(table), 4u);
  EXPECT_EQ(table.rfind("variant,rmse_x", 0), 0u);
  const std::string md = slurp(dir.path() / "report.md");
  for (const char* v : {"| coupled |", "| decoupled |", "| baseline |"}) {
    EXPECT_NE(md.find(v), std::string::npos) << v;
  }
  EXPECT_NE(md.find("initial"), std::string::npos);

  TempDir one("compare_one");
  c.output_dir = one.path();
  c.variants = {Variant::Baseline};
  EXPECT_EQ(compare_variants(c).size(), 1u);
  EXPECT_EQ(line_count(slurp(one.path() / "comparison.csv")), 2u);
}

TEST(Compare, FailingVariantDoesNotStopOthers) {
  TempDir dir("compare_fail");
  ExperimentConfig c = short_config(1.0);
  c.output_dir = dir.path();
  c.max_iterations = 1;
  c.max_failed_solves = 0;
  const auto outcomes = compare_variants(c);
  ASSERT_EQ(outcomes.size(), 3u);
  for (const auto& o : outcomes) {
    EXPECT_FALSE(o.metrics.has_value());
    EXPECT_FALSE(o.error.empty());
  }
  EXPECT_TRUE(fs::exists(dir.path() / "report.md"));
}

}  // namespace
}  // namespace quadmpc
