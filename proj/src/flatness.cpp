#include "quadmpc/flatness.hpp"

#include <cmath>

namespace quadmpc {

namespace {

constexpr double kHeadingTolerance = 1e-6;

Jet3 cross(const Jet3& a, const Jet3& b) {
  Jet3 c;
  c.value = a.value.cross(b.value);
  c.d1 = a.d1.cross(b.value) + a.value.cross(b.d1);
  c.d2 = a.d2.cross(b.value) + 2.0 * a.d1.cross(b.d1) + a.value.cross(b.d2);
  return c;
}

}  // namespace

Jet3 normalize(const Jet3& w) {
  const double r = w.value.norm();
  if (!(r > 1e-12)) throw InvalidArgument("normalize: zero vector");
  Jet3 n;
  n.value = w.value / r;
  const double r1 = n.value.dot(w.d1);
  n.d1 = (w.d1 - n.value * r1) / r;
  const double r2 = n.d1.dot(w.d1) + n.value.dot(w.d2);
  n.d2 = (w.d2 - 2.0 * n.d1 * r1 - n.value * r2) / r;
  return n;
}

FlatAttitude flat_attitude(const Jet3& f, double psi, double psi_dot, double psi_ddot) {
  FlatAttitude out;
  out.thrust = f.value.norm();
  const Jet3 z = normalize(f);

  const double c = std::cos(psi);
  const double s = std::sin(psi);
  Jet3 xc;
  xc.value = Vec3(c, s, 0.0);
  xc.d1 = psi_dot * Vec3(-s, c, 0.0);
  xc.d2 = psi_ddot * Vec3(-s, c, 0.0) - psi_dot * psi_dot * Vec3(c, s, 0.0);

  const Jet3 y_raw = cross(z, xc);
  if (y_raw.value.norm() < kHeadingTolerance) {
    throw DegenerateHeading("thrust axis is parallel to the heading direction");
  }
  const Jet3 y = normalize(y_raw);
  const Jet3 x = cross(y, z);

  Mat3 R, Rd, Rdd;
  R << x.value, y.value, z.value;
  Rd << x.d1, y.d1, z.d1;
  Rdd << x.d2, y.d2, z.d2;

  out.R = R;
  out.omega = vee(R.transpose() * Rd);
  // R' R'' = S(w') + S(w)^2 and S(w)^2 is symmetric.
  out.omega_dot = vee(R.transpose() * Rdd);
  return out;
}

}  // namespace quadmpc
