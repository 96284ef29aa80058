#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace quadmpc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat12x3 = Eigen::Matrix<double, 12, 3>;
using Mat3x12 = Eigen::Matrix<double, 3, 12>;

/// S(a) with S(a) b = a x b.
inline Mat3 skew(const Vec3& a) {
  Mat3 s;
  s << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return s;
}

/// Inverse of skew() for (approximately) skew-symmetric input.
inline Vec3 vee(const Mat3& s) {
  return Vec3(0.5 * (s(2, 1) - s(1, 2)),
              0.5 * (s(0, 2) - s(2, 0)),
              0.5 * (s(1, 0) - s(0, 1)));
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigenvalue outside the closed unit disk, or a defective unit-circle eigenvalue.
class NotMarginallyStable : public Error {
 public:
  using Error::Error;
};

/// Input matrix gives no authority (B^T M B == 0) or similar degenerate data.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Discrete Lyapunov iteration cannot converge (spectral radius >= 1).
class NotSchurStable : public Error {
 public:
  using Error::Error;
};

/// Reference thrust leaves the admissible band, so rho(t) <= 0 somewhere.
class InfeasibleReference : public Error {
 public:
  using Error::Error;
};

/// The unified input set has lo_j > up_j on some face.
class EmptyInputSet : public Error {
 public:
  EmptyInputSet(const std::string& what, int face) : Error(what), face_(face) {}
  int face() const { return face_; }

 private:
  int face_;
};

/// Commanded thrust axis is parallel to the heading direction.
class DegenerateHeading : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Too many MPC solves ended without meeting the KKT tolerance.
class SolverFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace quadmpc
