#pragma once

#include <map>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "quadmpc/types.hpp"

namespace quadmpc {

/// Stability bundle for a marginally stable pair (Ad, Bd).
///
/// W(x) = x' Mq x + lambda (x' Mc x)^{3/2} is a global Lyapunov function for
/// x+ = Ad x + Bd sat(K x) with saturation level rho_star / sqrt(3), and
/// V = theta * W is the MPC terminal cost.
struct Certificate {
  Eigen::MatrixXd Mc;
  Eigen::MatrixXd Mq;
  Eigen::MatrixXd K;
  double kappa = 0.0;
  double lambda = 0.0;
  double theta = 0.0;
  double Lu = 0.0;
  double rho_star = 0.0;
  /// lmi_mc, kappa_margin, lyapunov_mq, lu_margin, theta_margin.
  std::map<std::string, double> residuals;

  double saturation_level() const;  // rho_star / sqrt(3)
  bool valid() const;

  nlohmann::json to_json() const;
  static Certificate from_json(const nlohmann::json& j);
};

inline constexpr double kMcTolerance = 1e-8;
inline constexpr double kMqTolerance = 1e-6;
inline constexpr double kKappaMargin = 0.9;
inline constexpr double kLuMargin = 1.1;

/// Symmetric positive definite Mc with Ad' Mc Ad - Mc <= 0.
///
/// Ad is brought to ordered real Schur form with the unit-circle eigenvalues
/// leading, decoupled by a Sylvester solve, and weighted with identity on the
/// (normal) unit-circle block and the discrete Lyapunov solution with right
/// hand side I on the stable block.
Eigen::MatrixXd compute_Mc(const Eigen::MatrixXd& Ad);

struct SmallGain {
  double kappa = 0.0;
  Eigen::MatrixXd K;
};

/// kappa = 0.9 / lambda_max(Bd' Mc Bd), K = -kappa Bd' Mc Ad.
SmallGain compute_small_gain(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd,
                             const Eigen::MatrixXd& Mc);

/// Solves A' X A - X = -Q by doubling. Throws NotSchurStable if rho(A) >= 1.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q,
                                        double tol = 1e-10);

/// Mq with Acl' Mq Acl - Mq = -I.
Eigen::MatrixXd compute_Mq(const Eigen::MatrixXd& Acl);

Certificate build_certificate(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd,
                              const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                              double rho_star);

/// W(x) = x' Mq x + lambda (x' Mc x)^{3/2}.
double lyapunov_value(const Certificate& cert, const Eigen::VectorXd& x);

/// W(Ad x + Bd sat(K x)) - W(x) + |x|^2; non-positive for a valid certificate.
double lyapunov_decrease_check(const Certificate& cert, const Eigen::MatrixXd& Ad,
                               const Eigen::MatrixXd& Bd, const Eigen::VectorXd& x,
                               double u_max);

Eigen::VectorXd saturate(const Eigen::VectorXd& u, double u_max);

double spectral_radius(const Eigen::MatrixXd& A);

}  // namespace quadmpc
