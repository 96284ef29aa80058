#pragma once

#include "quadmpc/types.hpp"

namespace quadmpc {

struct ReferencePoint;

struct PlantParams {
  double g = 9.81;
  Mat3 J = Mat3::Identity();
  Vec3 drag = Vec3::Zero();    // diagonal of D, 1/s
  Mat3 A = Mat3::Zero();
  Mat3 C = Mat3::Zero();
  Vec3 tau_g = Vec3::Zero();
  double Tmax = 0.0;           // mass-normalized, m/s^2

  /// J = 1e-3 diag(2.5, 2.1, 4.3) kg m^2, D = diag(0.26, 0.28, 0.42),
  /// A = 0.1 I, C = 0.5 I, tau_g = 0, Tmax = 45.21.
  static PlantParams defaults();

  /// Throws InvalidArgument unless J is SPD and Tmax > g.
  void validate() const;
};

struct QuadState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 omega = Vec3::Zero();
};

struct StateDerivative {
  Vec3 p_dot;
  Vec3 v_dot;
  Mat3 R_dot;
  Vec3 omega_dot;
};

/// p' = v, v' = g z_G - T z_B - D v, R' = R S(w),
/// J w' = S(J w) w - tau_g - A R' v - C w + tau.
StateDerivative plant_derivative(const QuadState& x, const PlantParams& params, double T,
                                 const Vec3& tau);

/// One RK4 step on (p, v, w). R is advanced by the exponential of the averaged
/// body-rate increment and projected back onto SO(3).
QuadState integrate_rk4(const QuadState& x, const PlantParams& params, double T,
                        const Vec3& tau, double dt = 1e-3);

/// Nearest rotation in the Frobenius norm (polar factor with det = +1).
Mat3 project_to_so3(const Mat3& M);

/// exp(S(w)) by the Rodrigues formula.
Mat3 so3_exp(const Vec3& w);

/// Rotation angle of R in [0, pi].
double rotation_angle(const Mat3& R);

/// Desired thrust and attitude in world quantities. Rd maps body to world and
/// omega_d, omega_d_dot are the desired body rate and its derivative.
struct AttitudeCommand {
  double T = 0.0;
  Mat3 Rd = Mat3::Identity();
  Vec3 omega_d = Vec3::Zero();
  Vec3 omega_d_dot = Vec3::Zero();
};

/// Flat conversion of the virtual acceleration. The thrust vector is
/// f = Tbar zbar_B - a_d so that the velocity error obeys v~' = -D v~ + a_d.
AttitudeCommand flatness_attitude(const Vec3& a_d, const Vec3& a_d_dot, const Vec3& a_d_ddot,
                                  const ReferencePoint& ref);

struct AttitudeGains {
  Mat3 K_omega = Mat3::Identity();
  Mat3 K_R = Mat3::Identity();
  Vec3 k = Vec3::Ones();

  /// K_omega = 30 J, K_R = 70 J, k = (4.5, 5, 5.5).
  static AttitudeGains defaults(const PlantParams& params);
};

/// Attitude error coordinates relative to the reference attitude.
struct AttitudeError {
  Mat3 R_tilde;   // Rbar' R
  Mat3 R_e;       // Rd_rel' R_tilde
  Vec3 omega_e;   // w - R_tilde' wbar - R_e' wd_rel
  Mat3 Rd_rel;    // Rbar' Rd
  Vec3 wd_rel;
  Vec3 wd_rel_dot;
};

AttitudeError attitude_error(const QuadState& x, const ReferencePoint& ref,
                             const AttitudeCommand& cmd);

/// Geometric tracking torque. With the reference feasible the closed loop is
/// R_e' = R_e S(w_e), J w_e' = -K_omega w_e + K_R sum_i k_i (e_i x R_e' e_i).
Vec3 inner_loop_torque(const QuadState& x, const ReferencePoint& ref,
                       const AttitudeCommand& cmd, const AttitudeGains& gains,
                       const PlantParams& params);

}  // namespace quadmpc
