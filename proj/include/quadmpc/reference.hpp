#pragma once

#include <array>
#include <memory>

#include "quadmpc/outer_model.hpp"
#include "quadmpc/vehicle.hpp"

namespace quadmpc {

/// Flat outputs at one instant: position derivatives of order 0..4 and
/// heading derivatives of order 0..2.
struct FlatSample {
  std::array<Vec3, 5> p;
  std::array<double, 3> psi;
};

class FlatTrajectory {
 public:
  virtual ~FlatTrajectory() = default;
  virtual FlatSample eval(double t) const = 0;
};

/// p = c + s (2 cos 4t, 2 sin 4t, 2 sin 2t) with c = (0, 0, -10), psi = 0.2 t.
class TrigTrajectory : public FlatTrajectory {
 public:
  explicit TrigTrajectory(double scale = 1.0) : scale_(scale) {}
  FlatSample eval(double t) const override;

 private:
  double scale_;
};

/// Constant position and heading.
class HoverTrajectory : public FlatTrajectory {
 public:
  explicit HoverTrajectory(const Vec3& p = Vec3(0.0, 0.0, -10.0), double psi = 0.0)
      : p_(p), psi_(psi) {}
  FlatSample eval(double t) const override;

 private:
  Vec3 p_;
  double psi_;
};

struct ReferencePoint {
  double t = 0.0;
  Vec3 pbar = Vec3::Zero();
  Vec3 vbar = Vec3::Zero();
  Vec3 abar = Vec3::Zero();
  Mat3 Rbar = Mat3::Identity();
  Vec3 wbar = Vec3::Zero();
  Vec3 wbar_dot = Vec3::Zero();
  double Tbar = 0.0;
  Vec3 taubar = Vec3::Zero();
  Vec3 zbar_B = Vec3::UnitZ();
  double psi = 0.0;
  double psi_dot = 0.0;
  double psi_ddot = 0.0;
  /// Tbar zbar_B = g z_G - abar - D vbar and its first two derivatives.
  Vec3 thrust = Vec3::Zero();
  Vec3 thrust_dot = Vec3::Zero();
  Vec3 thrust_ddot = Vec3::Zero();
};

/// Reference states and inputs from the flat outputs. Throws
/// InfeasibleReference when Tbar is outside (delta, Tmax - delta).
ReferencePoint flat_to_reference(const FlatTrajectory& traj, const PlantParams& params, double t,
                                 double delta = 1.0);

/// rho(t) = min(Tbar - delta, Tmax - Tbar) with per-interval minima for
/// samples j = 0..samples-1 on the h-grid, and the feasibility condition for
/// (alpha, beta) evaluated on them.
RhoSchedule build_rho_schedule(std::shared_ptr<const FlatTrajectory> traj,
                               const PlantParams& params, double delta, double h,
                               std::size_t samples, double alpha, double beta);

}  // namespace quadmpc
