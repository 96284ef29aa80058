#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmpc/certificates.hpp"
#include "quadmpc/mpc.hpp"
#include "quadmpc/reference.hpp"
#include "quadmpc/vehicle.hpp"

namespace quadmpc {

struct ExperimentConfig {
  std::vector<Variant> variants = {Variant::Coupled, Variant::Decoupled, Variant::Baseline};
  double h = 0.05;
  double gamma = 0.1;
  int horizon = 20;
  Mat12 Q = default_mpc_config().Q;
  Mat3 R = default_mpc_config().R;
  double kkt_tolerance = 1e-6;
  int max_iterations = 100;
  bool warm_start = true;
  int max_failed_solves = 25;
  AttitudeGains gains = AttitudeGains::defaults(PlantParams::defaults());
  double delta = 1.0;
  PlantParams plant = PlantParams::defaults();
  double duration = 25.0;
  int substeps = 50;

  std::string trajectory = "trig";  // "trig" or "hover"
  double trajectory_scale = 1.0;
  Vec3 hover_position = Vec3(0.0, 0.0, -10.0);
  double hover_heading = 0.0;

  Vec3 initial_offset = Vec3::Ones();  // p(0) - pbar(0)
  Vec3 initial_velocity = Vec3::Zero();
  Mat3 initial_attitude = Mat3::Identity();
  Vec3 initial_rate = Vec3::Zero();

  std::filesystem::path output_dir;  // empty: no files written
  unsigned seed = 0;

  int samples() const;  // duration / h
  std::shared_ptr<const FlatTrajectory> make_trajectory() const;
  MpcConfig mpc_config(Variant v) const;
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& file);
};

struct RunMetrics {
  Variant variant = Variant::Coupled;
  int samples = 0;
  Vec3 rmse_xyz = Vec3::Zero();
  double rmse_combined = 0.0;
  double initial_position_error = 0.0;
  double final_position_error = 0.0;

  double avg_solve_time = 0.0;
  double max_solve_time = 0.0;
  double avg_iterations = 0.0;
  double max_kkt_residual = 0.0;
  int unconverged_solves = 0;

  /// Largest excess of a_d over the variant's own constraint at plant sub-steps.
  double max_constraint_violation = 0.0;
  /// Largest excess of |c_j . a_d(t)| over rho(t) at plant sub-steps.
  double max_dodecahedron_violation = 0.0;
  /// Largest excess of |a_d(t)| over rho(t) at plant sub-steps.
  double max_sphere_violation = 0.0;
  /// Intervals failing the 20-point intersample check at tolerance 1e-6.
  int intersample_failures = 0;
  /// Largest excess of rho_star over the unified set faces (cube containment).
  double max_cube_excess = 0.0;

  double min_thrust = 0.0;
  double max_thrust = 0.0;
  int thrust_clamps = 0;
  double max_so3_drift = 0.0;

  double rho_star = 0.0;
  double rho_min = 0.0;
  double baseline_level = 0.0;
  bool feasibility = false;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<int> active_counts;  // per bound bit of the active mask
  double wall_time = 0.0;

  nlohmann::json to_json() const;
};

/// Model, schedule and certificate shared by every variant of a config.
struct ExperimentSetup {
  DiscreteModel model;
  std::shared_ptr<const FlatTrajectory> trajectory;
  std::shared_ptr<const RhoSchedule> schedule;
  std::shared_ptr<const Certificate> certificate;
  double certificate_seconds = 0.0;
};

/// Throws InfeasibleReference when the schedule fails the feasibility condition.
ExperimentSetup prepare_experiment(const ExperimentConfig& config, bool build_cert = true);

/// Closed-loop run of one variant. With config.output_dir set, writes
/// states.csv, reference.csv, mpc_diag.csv, constraints.csv and metrics.json
/// into output_dir. Throws SolverFailure after max_failed_solves unconverged solves.
RunMetrics run_closed_loop(const ExperimentConfig& config, Variant variant,
                           std::shared_ptr<const Certificate> cert = nullptr);
RunMetrics run_closed_loop(const ExperimentConfig& config, Variant variant,
                           const ExperimentSetup& setup);

struct VariantOutcome {
  Variant variant = Variant::Coupled;
  std::optional<RunMetrics> metrics;
  std::string error;
};

/// Runs config.variants concurrently into output_dir/<variant>/ and writes
/// report.md and comparison.csv into output_dir. A failing variant is
/// reported and does not stop the others.
std::vector<VariantOutcome> compare_variants(const ExperimentConfig& config);

std::string render_report(const ExperimentConfig& config,
                          const std::vector<VariantOutcome>& outcomes);

struct AuditCheck {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // worst observed excess
  std::size_t rows = 0;
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  bool passed() const;
};

/// Re-checks a run directory against the constraint and SO(3) invariants.
AuditReport audit_run(const std::filesystem::path& run_dir, double tol = 1e-6);

}  // namespace quadmpc
