#include "quadmpc/vehicle.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "quadmpc/flatness.hpp"
#include "quadmpc/reference.hpp"

namespace quadmpc {

PlantParams PlantParams::defaults() {
  PlantParams p;
  p.g = 9.81;
  p.J = 1e-3 * Vec3(2.5, 2.1, 4.3).asDiagonal();
  p.drag = Vec3(0.26, 0.28, 0.42);
  p.A = 0.1 * Mat3::Identity();
  p.C = 0.5 * Mat3::Identity();
  p.tau_g = Vec3::Zero();
  p.Tmax = 45.21;
  return p;
}

void PlantParams::validate() const {
  if (!(Tmax > g)) throw InvalidArgument("plant: Tmax must exceed g");
  if ((J - J.transpose()).norm() > 1e-12 * J.norm()) {
    throw InvalidArgument("plant: J must be symmetric");
  }
  Eigen::LLT<Mat3> llt(J);
  if (llt.info() != Eigen::Success) throw InvalidArgument("plant: J must be positive definite");
  if ((drag.array() < 0.0).any()) throw InvalidArgument("plant: drag must be non-negative");
}

StateDerivative plant_derivative(const QuadState& x, const PlantParams& params, double T,
                                 const Vec3& tau) {
  StateDerivative d;
  d.p_dot = x.v;
  d.v_dot = params.g * Vec3::UnitZ() - T * x.R.col(2) - params.drag.cwiseProduct(x.v);
  d.R_dot = x.R * skew(x.omega);
  const Vec3 Jw = params.J * x.omega;
  const Vec3 rhs = Jw.cross(x.omega) - params.tau_g - params.A * (x.R.transpose() * x.v) -
                   params.C * x.omega + tau;
  d.omega_dot = params.J.llt().solve(rhs);
  return d;
}

Mat3 so3_exp(const Vec3& w) {
  const double th = w.norm();
  const Mat3 S = skew(w);
  if (th < 1e-8) return Mat3::Identity() + S + 0.5 * S * S;
  return Mat3::Identity() + (std::sin(th) / th) * S +
         ((1.0 - std::cos(th)) / (th * th)) * S * S;
}

Mat3 project_to_so3(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

double rotation_angle(const Mat3& R) {
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double s = vee(R).norm();
  return std::atan2(s, c);
}

QuadState integrate_rk4(const QuadState& x, const PlantParams& params, double T,
                        const Vec3& tau, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("integrate_rk4: dt must be positive");

  auto stage = [&](const StateDerivative& k, const Vec3& w_rot, double c) {
    QuadState s;
    s.p = x.p + c * dt * k.p_dot;
    s.v = x.v + c * dt * k.v_dot;
    s.omega = x.omega + c * dt * k.omega_dot;
    s.R = x.R * so3_exp(c * dt * w_rot);
    return s;
  };

  const StateDerivative k1 = plant_derivative(x, params, T, tau);
  const QuadState x2 = stage(k1, x.omega, 0.5);
  const StateDerivative k2 = plant_derivative(x2, params, T, tau);
  const QuadState x3 = stage(k2, x2.omega, 0.5);
  const StateDerivative k3 = plant_derivative(x3, params, T, tau);
  const QuadState x4 = stage(k3, x3.omega, 1.0);
  const StateDerivative k4 = plant_derivative(x4, params, T, tau);

  QuadState out;
  out.p = x.p + dt / 6.0 * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot);
  out.v = x.v + dt / 6.0 * (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot);
  out.omega = x.omega + dt / 6.0 * (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot +
                                    k4.omega_dot);
  const Vec3 w_avg = (x.omega + 2.0 * x2.omega + 2.0 * x3.omega + x4.omega) / 6.0;
  out.R = project_to_so3(x.R * so3_exp(dt * w_avg));
  return out;
}

AttitudeCommand flatness_attitude(const Vec3& a_d, const Vec3& a_d_dot, const Vec3& a_d_ddot,
                                  const ReferencePoint& ref) {
  Jet3 f;
  f.value = ref.thrust - a_d;
  f.d1 = ref.thrust_dot - a_d_dot;
  f.d2 = ref.thrust_ddot - a_d_ddot;
  const FlatAttitude fa = flat_attitude(f, ref.psi, ref.psi_dot, ref.psi_ddot);
  AttitudeCommand cmd;
  cmd.T = fa.thrust;
  cmd.Rd = fa.R;
  cmd.omega_d = fa.omega;
  cmd.omega_d_dot = fa.omega_dot;
  return cmd;
}

AttitudeGains AttitudeGains::defaults(const PlantParams& params) {
  AttitudeGains g;
  g.K_omega = 30.0 * params.J;
  g.K_R = 70.0 * params.J;
  g.k = Vec3(4.5, 5.0, 5.5);
  return g;
}

AttitudeError attitude_error(const QuadState& x, const ReferencePoint& ref,
                             const AttitudeCommand& cmd) {
  AttitudeError e;
  const Mat3& Rbar = ref.Rbar;
  e.R_tilde = Rbar.transpose() * x.R;
  e.Rd_rel = Rbar.transpose() * cmd.Rd;
  const Vec3 wbar_in_d = e.Rd_rel.transpose() * ref.wbar;
  e.wd_rel = cmd.omega_d - wbar_in_d;
  e.wd_rel_dot = cmd.omega_d_dot + e.wd_rel.cross(wbar_in_d) -
                 e.Rd_rel.transpose() * ref.wbar_dot;
  e.R_e = e.Rd_rel.transpose() * e.R_tilde;
  e.omega_e = x.omega - e.R_tilde.transpose() * ref.wbar - e.R_e.transpose() * e.wd_rel;
  return e;
}

Vec3 inner_loop_torque(const QuadState& x, const ReferencePoint& ref,
                       const AttitudeCommand& cmd, const AttitudeGains& gains,
                       const PlantParams& params) {
  const AttitudeError e = attitude_error(x, ref, cmd);
  const Mat3& J = params.J;
  const Mat3& Rt = e.R_tilde;
  const Vec3& wbar = ref.wbar;
  const Vec3& w = x.omega;

  Vec3 attitude_term = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    attitude_term += gains.k(i) * Vec3::Unit(i).cross(e.R_e.transpose() * Vec3::Unit(i));
  }

  const Vec3 ref_rhs = (J * wbar).cross(wbar) - params.tau_g -
                       params.A * (ref.Rbar.transpose() * ref.vbar) - params.C * wbar +
                       ref.taubar;
  const Vec3 transport = (skew(w) * Rt.transpose() - Rt.transpose() * skew(wbar)) * wbar +
                         e.omega_e.cross(e.R_e.transpose() * e.wd_rel) -
                         e.R_e.transpose() * e.wd_rel_dot;

  return -gains.K_omega * e.omega_e + gains.K_R * attitude_term - (J * w).cross(w) +
         params.tau_g + params.A * (x.R.transpose() * x.v) + params.C * w +
         J * (Rt.transpose() * J.llt().solve(ref_rhs)) - J * transport;
}

}  // namespace quadmpc
