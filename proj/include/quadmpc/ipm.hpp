#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace quadmpc {

// Primal-dual interior point method for the multiple-shooting problem
//
//   min   V(x_N) + sum_{i<N} x_i' Q x_i + u_i' R u_i
//   s.t.  x_0 = x_init,  x_{i+1} = A x_i + B u_i,
//         Gx_i x_i + Gu_i u_i <= g_i          (i = 0..N-1)
//
// with V convex and twice differentiable. Newton systems are solved by a
// Riccati recursion over the stages, so the cost per iteration is linear in N.

struct StageConstraints {
  Eigen::MatrixXd Gx;  // m x nx
  Eigen::MatrixXd Gu;  // m x nu
  Eigen::VectorXd g;   // m

  Eigen::Index rows() const { return g.size(); }
};

struct TerminalEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

using TerminalFn = std::function<TerminalEval(const Eigen::VectorXd&)>;

struct OcpProblem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::VectorXd x_init;
  std::vector<StageConstraints> stages;  // size N
  TerminalFn terminal;

  int horizon() const { return static_cast<int>(stages.size()); }
};

struct IpmSettings {
  double tolerance = 1e-6;
  int max_iterations = 100;
};

/// Primal/dual iterate. Slacks and multipliers are stored per stage.
struct IpmIterate {
  std::vector<Eigen::VectorXd> X;       // N + 1
  std::vector<Eigen::VectorXd> U;       // N
  std::vector<Eigen::VectorXd> slack;   // N
  std::vector<Eigen::VectorXd> dual;    // N
  std::vector<Eigen::VectorXd> costate; // N + 1, dynamics multipliers
};

struct IpmResult {
  IpmIterate iterate;
  double cost = 0.0;
  /// max(|stationarity|_inf / s, |dynamics|_inf, |inequality violation|_inf, s'lambda / s)
  /// with s = max(1, largest objective gradient entry at the iterate / 100).
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Objective value at (X, U).
double ocp_cost(const OcpProblem& problem, const std::vector<Eigen::VectorXd>& X,
                const std::vector<Eigen::VectorXd>& U);

/// Solves the problem. `warm` (optional) seeds the primal trajectory and the
/// inequality multipliers; slacks are re-derived from it.
IpmResult solve_ocp(const OcpProblem& problem, const IpmSettings& settings,
                    const IpmIterate* warm = nullptr);

}  // namespace quadmpc
