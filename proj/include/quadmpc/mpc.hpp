#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "quadmpc/certificates.hpp"
#include "quadmpc/ipm.hpp"
#include "quadmpc/outer_model.hpp"

namespace quadmpc {

enum class Variant { Coupled, Decoupled, Baseline };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct MpcConfig {
  int horizon = 20;
  Mat12 Q = Mat12::Identity();
  Mat3 R = Mat3::Identity();
  Variant variant = Variant::Coupled;
  double kkt_tolerance = 1e-6;
  int max_iterations = 100;
  bool warm_start = true;
};

/// Q = diag(100,1,1,1, 100,1,1,1, 80,1,1,1), R = diag(0.01, 0.01, 0.1), N = 20.
MpcConfig default_mpc_config(Variant variant = Variant::Coupled);

struct MpcSolution {
  std::vector<Vec3> U;   // N
  std::vector<Vec12> X;  // N + 1
  double cost = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  double solve_time = 0.0;  // seconds
  bool converged = false;
  /// Bit 2j (2j+1) set when the upper (lower) bound of functional j is active
  /// at the first stage. Functionals are the six faces (coupled) or the three
  /// axes (decoupled, baseline).
  std::uint32_t active_mask = 0;
  IpmIterate iterate;  // kept for warm starting
};

/// V(x) = theta [x' Mq x + lambda (x' Mc x)^{3/2}] with gradient and Hessian.
/// The rank-one Hessian term is taken as zero at x = 0.
TerminalEval terminal_cost(const Certificate& cert, const Eigen::VectorXd& x);

/// Input bounds of one stage as slabs lo_j <= n_j . u <= up_j.
struct InputBounds {
  std::vector<Vec3> normals;
  std::vector<double> lo;
  std::vector<double> up;

  bool contains(const Vec3& u, double tol = 0.0) const;
  bool empty() const;
};

InputBounds to_input_bounds(const SlabSet& s);

/// Per-stage input set of a controller variant at state x_i.
///  coupled   -> unified_input_set (dodecahedron faces)
///  decoupled -> per-axis interval from the scalar maps at level rho / sqrt(3)
///  baseline  -> per-axis interval at the constant level baseline_level
/// Throws EmptyInputSet if the set is empty.
InputBounds variant_constraints(Variant variant, double rho_now, double rho_next,
                                const OuterState& x_i, const DiscreteModel& model,
                                double baseline_level = 0.0);

/// Affine rows Gx x_i + Gu u_i <= g equivalent to variant_constraints at the
/// decision-variable state x_i.
StageConstraints stage_constraints(Variant variant, double rho_now, double rho_next,
                                   const DiscreteModel& model, double baseline_level = 0.0);

/// Radii rho_{i|k}, i = 0..N, for the window starting at sample k.
std::vector<double> rho_window(const RhoSchedule& schedule, int k, int horizon);

/// Solves one MPC problem at x0 with rho_{i|k} = rho[i], i = 0..N.
MpcSolution solve(const MpcConfig& config, const Certificate& cert, const DiscreteModel& model,
                  const Vec12& x0, const std::vector<double>& rho, double baseline_level = 0.0,
                  const IpmIterate* warm = nullptr);

struct StepDiagnostics {
  int k = 0;
  double solve_time = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;
  double cost = 0.0;
  std::uint32_t active_mask = 0;
  bool converged = false;
};

/// Receding-horizon controller: one solve per sample with shift-and-hold warm start.
class MpcController {
 public:
  MpcController(MpcConfig config, std::shared_ptr<const Certificate> cert, DiscreteModel model,
                std::shared_ptr<const RhoSchedule> schedule);

  /// Solves at x_k for the window [k, k+N] and returns u*_{0|k}.
  Vec3 step(const Vec12& x_k, int k, StepDiagnostics* diag = nullptr);

  const MpcSolution& last_solution() const { return last_; }
  const MpcConfig& config() const { return config_; }
  double baseline_level() const { return baseline_level_; }
  void reset() { has_previous_ = false; }

 private:
  MpcConfig config_;
  std::shared_ptr<const Certificate> cert_;
  DiscreteModel model_;
  std::shared_ptr<const RhoSchedule> schedule_;
  double baseline_level_ = 0.0;
  MpcSolution last_;
  bool has_previous_ = false;
};

}  // namespace quadmpc
