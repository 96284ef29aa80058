#include "quadmpc/outer_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

namespace quadmpc {

Vec12 OuterState::stacked() const {
  Vec12 x;
  for (int axis = 0; axis < 3; ++axis) {
    x(state_index(axis, Block::Position)) = p_err(axis);
    x(state_index(axis, Block::Velocity)) = v_err(axis);
    x(state_index(axis, Block::Accel)) = a_d(axis);
    x(state_index(axis, Block::Filter)) = eta(axis);
  }
  return x;
}

OuterState OuterState::from_stacked(const Vec12& x) {
  OuterState s;
  for (int axis = 0; axis < 3; ++axis) {
    s.p_err(axis) = x(state_index(axis, Block::Position));
    s.v_err(axis) = x(state_index(axis, Block::Velocity));
    s.a_d(axis) = x(state_index(axis, Block::Accel));
    s.eta(axis) = x(state_index(axis, Block::Filter));
  }
  return s;
}

std::pair<Eigen::Matrix4d, Eigen::Vector4d> axis_continuous_model(double gamma, double drag) {
  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  Eigen::Vector4d B = Eigen::Vector4d::Zero();
  // p' = v, v' = -d v + a_d, a_d' = -(a_d - eta)/gamma, eta' = -(eta - s)/gamma
  A(0, 1) = 1.0;
  A(1, 1) = -drag;
  A(1, 2) = 1.0;
  A(2, 2) = -1.0 / gamma;
  A(2, 3) = 1.0 / gamma;
  A(3, 3) = -1.0 / gamma;
  B(3) = 1.0 / gamma;
  return {A, B};
}

std::pair<Mat12, Mat12x3> continuous_model(double gamma, const Vec3& drag) {
  Mat12 A = Mat12::Zero();
  Mat12x3 B = Mat12x3::Zero();
  for (int axis = 0; axis < 3; ++axis) {
    auto [Ai, Bi] = axis_continuous_model(gamma, drag(axis));
    A.block<4, 4>(4 * axis, 4 * axis) = Ai;
    B.block<4, 1>(4 * axis, axis) = Bi;
  }
  return {A, B};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> zoh(const Eigen::MatrixXd& A,
                                                const Eigen::MatrixXd& B, double h) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  // M = [A  B]
  //     [0  0]
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = A;
  M.topRightCorner(n, m) = B;
  const Eigen::MatrixXd phi = (M * h).exp();
  return {phi.topLeftCorner(n, n), phi.topRightCorner(n, m)};
}

DiscreteModel discretize(double gamma, double h, const Vec3& drag) {
  if (!(gamma > 0.0) || !(h > 0.0) || !(drag.array() > 0.0).all()) {
    throw InvalidArgument("discretize: gamma, h and drag must be positive");
  }
  DiscreteModel model;
  model.h = h;
  model.gamma = gamma;
  model.drag = drag;
  model.alpha = std::exp(-h / gamma);
  model.beta = (h / gamma) * std::exp(-h / gamma);

  // The three axes share the filter and differ only in drag, so each 4x4
  // block is discretized on its own.
  for (int axis = 0; axis < 3; ++axis) {
    auto [Ai, Bi] = axis_continuous_model(gamma, drag(axis));
    auto [Adi, Bdi] = zoh(Ai, Bi, h);
    model.Ad.block<4, 4>(4 * axis, 4 * axis) = Adi;
    model.Bd.block<4, 1>(4 * axis, axis) = Bdi;

    // Filter rows in closed form (they agree with expm to rounding).
    const int a = state_index(axis, Block::Accel);
    const int e = state_index(axis, Block::Filter);
    model.Ad(a, a) = model.alpha;
    model.Ad(a, e) = model.beta;
    model.Bd(a, axis) = 1.0 - model.alpha - model.beta;
    model.Ad(e, e) = model.alpha;
    model.Bd(e, axis) = 1.0 - model.alpha;
  }
  return model;
}

// ---------------------------------------------------------------------------

const std::array<Vec3, kNumFaces>& face_normals() {
  static const std::array<Vec3, kNumFaces> normals = [] {
    const double phi = kGoldenRatio;
    const double a = std::sqrt(3.0) / (phi * phi);
    const double b = std::sqrt(3.0) / phi;
    constexpr int pairs[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    std::array<Vec3, kNumFaces> out;
    for (int p = 0; p < 3; ++p) {
      for (int sign = 0; sign < 2; ++sign) {
        Vec3 c = Vec3::Zero();
        c(pairs[p][0]) = a;
        c(pairs[p][1]) = sign == 0 ? b : -b;
        out[2 * p + sign] = c;
      }
    }
    return out;
  }();
  return normals;
}

double face_value(int face, const Vec3& u) { return face_normals()[face].dot(u); }

bool SlabSet::contains(const Vec3& u, double tol) const {
  for (int j = 0; j < kNumFaces; ++j) {
    const double c = face_value(j, u);
    if (c < lo[j] - tol || c > up[j] + tol) return false;
  }
  return true;
}

double SlabSet::worst_gap() const {
  double gap = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < kNumFaces; ++j) gap = std::max(gap, lo[j] - up[j]);
  return gap;
}

bool SlabSet::empty() const { return worst_gap() > 0.0; }

SlabSet dodecahedron_set(double rho) {
  if (!(rho > 0.0)) throw InvalidArgument("dodecahedron_set: rho must be positive");
  SlabSet s;
  s.lo.fill(-rho);
  s.up.fill(rho);
  return s;
}

SlabSet map_ad_constraint(const DiscreteModel& model, const OuterState& x, double rho_next) {
  const double gain = 1.0 - model.alpha - model.beta;
  if (!(gain > 0.0)) {
    throw InvalidArgument("map_ad_constraint: alpha + beta must be < 1");
  }
  SlabSet s;
  for (int j = 0; j < kNumFaces; ++j) {
    const double drift = model.alpha * face_value(j, x.a_d) + model.beta * face_value(j, x.eta);
    s.lo[j] = (-rho_next - drift) / gain;
    s.up[j] = (rho_next - drift) / gain;
  }
  return s;
}

SlabSet map_eta_constraint(const DiscreteModel& model, const OuterState& x, double rho_next) {
  const double gain = 1.0 - model.alpha;
  if (!(gain > 0.0)) {
    throw InvalidArgument("map_eta_constraint: alpha must be < 1");
  }
  SlabSet s;
  for (int j = 0; j < kNumFaces; ++j) {
    const double drift = model.alpha * face_value(j, x.eta);
    s.lo[j] = (-rho_next - drift) / gain;
    s.up[j] = (rho_next - drift) / gain;
  }
  return s;
}

SlabSet unified_input_set(const DiscreteModel& model, const OuterState& x, double rho_now,
                          double rho_next) {
  const SlabSet ad = map_ad_constraint(model, x, rho_next);
  const SlabSet eta = map_eta_constraint(model, x, rho_next);
  SlabSet s;
  for (int j = 0; j < kNumFaces; ++j) {
    s.lo[j] = std::max({ad.lo[j], eta.lo[j], -rho_now});
    s.up[j] = std::min({ad.up[j], eta.up[j], rho_now});
    if (s.lo[j] > s.up[j]) {
      throw EmptyInputSet("unified input set is empty on face " + std::to_string(j) +
                              " (lo=" + std::to_string(s.lo[j]) +
                              ", up=" + std::to_string(s.up[j]) + ")",
                          j);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

double rho_from_thrust(double Tbar, double Tmax, double delta) {
  const double rho = std::min(Tbar - delta, Tmax - Tbar);
  if (!(rho > 0.0)) {
    throw InfeasibleReference("reference thrust " + std::to_string(Tbar) +
                              " leaves the band (" + std::to_string(delta) + ", " +
                              std::to_string(Tmax) + ")");
  }
  return rho;
}

double rho_interval_min(const ScalarFn& rho, double t_lo, double t_hi, int points) {
  if (!(t_lo < t_hi)) throw InvalidArgument("rho_interval_min: empty interval");
  points = std::max(points, 101);
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double t = (i == points - 1)
                         ? t_hi
                         : t_lo + (t_hi - t_lo) * static_cast<double>(i) / (points - 1);
    m = std::min(m, rho(t));
  }
  return kRhoSafetyFactor * m;
}

double RhoSchedule::at(std::size_t j) const {
  if (rho_k.empty()) throw InvalidArgument("RhoSchedule is empty");
  return rho_k[std::min(j, rho_k.size() - 1)];
}

double RhoSchedule::minimum() const {
  if (rho_k.empty()) throw InvalidArgument("RhoSchedule is empty");
  return *std::min_element(rho_k.begin(), rho_k.end());
}

bool feasibility_condition(std::span<const double> rho, double alpha, double beta) {
  for (std::size_t k = 0; k + 1 < rho.size(); ++k) {
    if (!(rho[k + 1] > (alpha + beta) * rho[k])) return false;
  }
  return true;
}

double compute_rho_star(std::span<const double> rho, double alpha, double beta) {
  if (rho.empty()) throw InvalidArgument("compute_rho_star: empty schedule");
  if (!feasibility_condition(rho, alpha, beta)) {
    throw InfeasibleReference("compute_rho_star: rho(k+1) > (alpha+beta) rho(k) violated");
  }
  double min_ad = std::numeric_limits<double>::infinity();
  double min_eta = std::numeric_limits<double>::infinity();
  double min_rho = rho[0];
  for (std::size_t k = 0; k + 1 < rho.size(); ++k) {
    min_ad = std::min(min_ad, rho[k + 1] - (alpha + beta) * rho[k]);
    min_eta = std::min(min_eta, rho[k + 1] - alpha * rho[k]);
    min_rho = std::min(min_rho, rho[k + 1]);
  }
  // A single-sample schedule has no transitions; only the level bound applies.
  const double ad_term = std::isfinite(min_ad) ? min_ad / (1.0 - alpha - beta) : min_rho;
  const double eta_term = std::isfinite(min_eta) ? min_eta / (1.0 - alpha) : min_rho;
  return std::min({ad_term, eta_term, min_rho});
}

FilterSample filter_response(double gamma, const Vec3& a_d, const Vec3& eta, const Vec3& s,
                             double tau) {
  const double r = tau / gamma;
  const double alpha = std::exp(-r);
  const double beta = r * alpha;
  FilterSample out;
  out.a_d = alpha * a_d + beta * eta + (1.0 - alpha - beta) * s;
  out.eta = alpha * eta + (1.0 - alpha) * s;
  out.a_d_dot = -(out.a_d - out.eta) / gamma;
  const Vec3 eta_dot = -(out.eta - s) / gamma;
  out.a_d_ddot = -(out.a_d_dot - eta_dot) / gamma;
  return out;
}

bool intersample_check(const DiscreteModel& model, const OuterState& x_k, const Vec3& u_k,
                       const ScalarFn& rho, double t_k, int n_sub, double tol) {
  n_sub = std::max(n_sub, 1);
  for (int m = 0; m <= n_sub; ++m) {
    const double tau = model.h * static_cast<double>(m) / n_sub;
    const FilterSample f = filter_response(model.gamma, x_k.a_d, x_k.eta, u_k, tau);
    const double r = rho(t_k + tau);
    for (int j = 0; j < kNumFaces; ++j) {
      if (std::abs(face_value(j, f.a_d)) > r + tol) return false;
    }
  }
  return true;
}

}  // namespace quadmpc
