#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "quadmpc/types.hpp"

namespace quadmpc {

// State layout of the translational error model. The 12-vector is stacked
// per axis: [p_x, v_x, ad_x, eta_x, p_y, ..., eta_z]. This matches the
// per-axis weight pattern Q = diag(100,1,1,1, 100,1,1,1, 80,1,1,1).
enum class Block : int { Position = 0, Velocity = 1, Accel = 2, Filter = 3 };

constexpr int state_index(int axis, Block block) {
  return 4 * axis + static_cast<int>(block);
}

struct OuterState {
  Vec3 p_err = Vec3::Zero();
  Vec3 v_err = Vec3::Zero();
  Vec3 a_d = Vec3::Zero();
  Vec3 eta = Vec3::Zero();

  Vec12 stacked() const;
  static OuterState from_stacked(const Vec12& x);
};

/// Exact ZOH discretization of the 12-state error model.
struct DiscreteModel {
  Mat12 Ad = Mat12::Zero();
  Mat12x3 Bd = Mat12x3::Zero();
  double h = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;  // exp(-h/gamma)
  double beta = 0.0;   // (h/gamma) exp(-h/gamma)
  Vec3 drag = Vec3::Zero();
};

/// Continuous-time (A, B) of the error model.
std::pair<Mat12, Mat12x3> continuous_model(double gamma, const Vec3& drag);

/// Per-axis 4-state continuous model [p, v, a_d, eta] with drag coefficient d.
std::pair<Eigen::Matrix4d, Eigen::Vector4d> axis_continuous_model(double gamma, double drag);

DiscreteModel discretize(double gamma, double h, const Vec3& drag);

/// ZOH of an arbitrary (A, B) pair via the exponential of [[A, B], [0, 0]] h.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> zoh(const Eigen::MatrixXd& A,
                                                const Eigen::MatrixXd& B, double h);

// ---------------------------------------------------------------------------
// Dodecahedron geometry.
//
// Six face functionals c_j . u, j = 0..5, pairing axes (m, n) in
// {(0,1), (1,2), (2,0)} with coefficient sqrt(3)/phi^2 on u_m and
// +/- sqrt(3)/phi on u_n (sign + for even j).

inline constexpr double kGoldenRatio = 1.6180339887498948482;
inline constexpr int kNumFaces = 6;

const std::array<Vec3, kNumFaces>& face_normals();
double face_value(int face, const Vec3& u);

struct SlabSet {
  std::array<double, kNumFaces> lo{};
  std::array<double, kNumFaces> up{};

  bool contains(const Vec3& u, double tol = 0.0) const;
  bool empty() const;
  /// Largest lo_j - up_j; positive means empty.
  double worst_gap() const;
};

/// Symmetric set |c_j . u| <= rho, circumscribed by the sphere of radius rho.
SlabSet dodecahedron_set(double rho);

/// Input bounds guaranteeing a_d(next) in dodecahedron_set(rho_next).
SlabSet map_ad_constraint(const DiscreteModel& model, const OuterState& x, double rho_next);

/// Input bounds guaranteeing eta(next) in dodecahedron_set(rho_next).
SlabSet map_eta_constraint(const DiscreteModel& model, const OuterState& x, double rho_next);

/// Face-wise intersection of the two mapped slabs and dodecahedron_set(rho_now).
/// Throws EmptyInputSet when a face has lo > up.
SlabSet unified_input_set(const DiscreteModel& model, const OuterState& x, double rho_now,
                          double rho_next);

// ---------------------------------------------------------------------------
// Time-varying radius.

/// rho = min(Tbar - delta, Tmax - Tbar); throws InfeasibleReference if rho <= 0.
double rho_from_thrust(double Tbar, double Tmax, double delta);

using ScalarFn = std::function<double(double)>;

/// Grid minimum of rho over [t_lo, t_hi] (>= 101 points), times 0.999.
double rho_interval_min(const ScalarFn& rho, double t_lo, double t_hi, int points = 101);

inline constexpr double kRhoSafetyFactor = 0.999;

struct RhoSchedule {
  ScalarFn rho_of_t;
  std::vector<double> rho_k;  // rho_k[j] = interval minimum over [j h, (j+1) h]
  double delta = 0.0;
  double Tmax = 0.0;
  double h = 0.0;
  bool feasible = false;      // result of feasibility_condition at build time

  double at(std::size_t j) const;  // clamps to the last entry past the end
  double minimum() const;
};

/// rho[k+1] > (alpha + beta) rho[k] for every consecutive pair.
bool feasibility_condition(std::span<const double> rho, double alpha, double beta);

/// Radius of the time-invariant dodecahedron inside every unified input set.
/// Throws InfeasibleReference when the feasibility condition fails.
double compute_rho_star(std::span<const double> rho, double alpha, double beta);

struct FilterSample {
  Vec3 a_d;
  Vec3 eta;
  Vec3 a_d_dot;
  Vec3 a_d_ddot;
};

/// Continuous evolution of (a_d, eta) under a constant input s after elapsed time tau.
FilterSample filter_response(double gamma, const Vec3& a_d, const Vec3& eta, const Vec3& s,
                             double tau);

/// Membership of a_d(t) in dodecahedron_set(rho(t)) at n_sub + 1 evenly spaced
/// points of [t_k, t_k + h].
bool intersample_check(const DiscreteModel& model, const OuterState& x_k, const Vec3& u_k,
                       const ScalarFn& rho, double t_k, int n_sub = 20, double tol = 1e-9);

}  // namespace quadmpc
