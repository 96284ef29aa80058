#pragma once

#include "quadmpc/types.hpp"

namespace quadmpc {

/// A vector signal with its first two time derivatives.
struct Jet3 {
  Vec3 value = Vec3::Zero();
  Vec3 d1 = Vec3::Zero();
  Vec3 d2 = Vec3::Zero();
};

/// n = w / |w| with derivatives. Throws InvalidArgument when |w| underflows.
Jet3 normalize(const Jet3& w);

/// Attitude whose third column is the thrust direction f / |f| and whose
/// first column lies in the plane spanned by the heading vector and z_B.
struct FlatAttitude {
  double thrust = 0.0;             // |f|
  Mat3 R = Mat3::Identity();       // body -> world
  Vec3 omega = Vec3::Zero();       // body rate, vee(R' dR/dt)
  Vec3 omega_dot = Vec3::Zero();
};

/// f is the thrust vector T z_B (NED, so hover is f = (0, 0, g)).
/// Throws DegenerateHeading when z_B is parallel to (cos psi, sin psi, 0).
FlatAttitude flat_attitude(const Jet3& f, double psi, double psi_dot, double psi_ddot);

}  // namespace quadmpc
