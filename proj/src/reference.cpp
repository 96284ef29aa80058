#include "quadmpc/reference.hpp"

#include <cmath>
#include <utility>

#include "quadmpc/flatness.hpp"

namespace quadmpc {

FlatSample TrigTrajectory::eval(double t) const {
  const double A = 2.0 * scale_;
  const double c4 = std::cos(4.0 * t), s4 = std::sin(4.0 * t);
  const double c2 = std::cos(2.0 * t), s2 = std::sin(2.0 * t);
  FlatSample f;
  f.p[0] = Vec3(A * c4, A * s4, -10.0 + A * s2);
  f.p[1] = Vec3(-4.0 * A * s4, 4.0 * A * c4, 2.0 * A * c2);
  f.p[2] = Vec3(-16.0 * A * c4, -16.0 * A * s4, -4.0 * A * s2);
  f.p[3] = Vec3(64.0 * A * s4, -64.0 * A * c4, -8.0 * A * c2);
  f.p[4] = Vec3(256.0 * A * c4, 256.0 * A * s4, 16.0 * A * s2);
  f.psi = {0.2 * t, 0.2, 0.0};
  return f;
}

FlatSample HoverTrajectory::eval(double) const {
  FlatSample f;
  f.p.fill(Vec3::Zero());
  f.p[0] = p_;
  f.psi = {psi_, 0.0, 0.0};
  return f;
}

ReferencePoint flat_to_reference(const FlatTrajectory& traj, const PlantParams& params, double t,
                                 double delta) {
  const FlatSample f = traj.eval(t);
  const Vec3& d = params.drag;

  ReferencePoint r;
  r.t = t;
  r.pbar = f.p[0];
  r.vbar = f.p[1];
  r.abar = f.p[2];
  r.psi = f.psi[0];
  r.psi_dot = f.psi[1];
  r.psi_ddot = f.psi[2];

  r.thrust = params.g * Vec3::UnitZ() - f.p[2] - d.cwiseProduct(f.p[1]);
  r.thrust_dot = -f.p[3] - d.cwiseProduct(f.p[2]);
  r.thrust_ddot = -f.p[4] - d.cwiseProduct(f.p[3]);

  r.Tbar = r.thrust.norm();
  rho_from_thrust(r.Tbar, params.Tmax, delta);

  Jet3 jet{r.thrust, r.thrust_dot, r.thrust_ddot};
  const FlatAttitude att = flat_attitude(jet, r.psi, r.psi_dot, r.psi_ddot);
  r.zbar_B = att.R.col(2);
  r.Rbar = att.R;
  r.wbar = att.omega;
  r.wbar_dot = att.omega_dot;

  const Mat3& J = params.J;
  r.taubar = J * r.wbar_dot - (J * r.wbar).cross(r.wbar) + params.tau_g +
             params.A * (r.Rbar.transpose() * r.vbar) + params.C * r.wbar;
  return r;
}

RhoSchedule build_rho_schedule(std::shared_ptr<const FlatTrajectory> traj,
                               const PlantParams& params, double delta, double h,
                               std::size_t samples, double alpha, double beta) {
  if (!traj) throw InvalidArgument("build_rho_schedule: null trajectory");
  if (!(h > 0.0) || samples == 0) throw InvalidArgument("build_rho_schedule: bad grid");

  const PlantParams p = params;
  RhoSchedule s;
  s.delta = delta;
  s.Tmax = params.Tmax;
  s.h = h;
  s.rho_of_t = [traj, p, delta](double t) {
    const FlatSample f = traj->eval(t);
    const Vec3 thrust = p.g * Vec3::UnitZ() - f.p[2] - p.drag.cwiseProduct(f.p[1]);
    return rho_from_thrust(thrust.norm(), p.Tmax, delta);
  };
  s.rho_k.reserve(samples);
  for (std::size_t j = 0; j < samples; ++j) {
    const double t0 = static_cast<double>(j) * h;
    s.rho_k.push_back(rho_interval_min(s.rho_of_t, t0, t0 + h));
  }
  s.feasible = feasibility_condition(s.rho_k, alpha, beta);
  return s;
}

}  // namespace quadmpc
