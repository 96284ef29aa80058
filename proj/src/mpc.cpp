#include "quadmpc/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

namespace quadmpc {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Coupled: return "coupled";
    case Variant::Decoupled: return "decoupled";
    case Variant::Baseline: return "baseline";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "coupled" || s == "c-mpc") return Variant::Coupled;
  if (s == "decoupled" || s == "d-mpc") return Variant::Decoupled;
  if (s == "baseline") return Variant::Baseline;
  throw InvalidArgument("unknown controller variant '" + s + "'");
}

MpcConfig default_mpc_config(Variant variant) {
  MpcConfig c;
  c.horizon = 20;
  Vec12 q;
  q << 100, 1, 1, 1, 100, 1, 1, 1, 80, 1, 1, 1;
  c.Q = q.asDiagonal();
  c.R = Vec3(0.01, 0.01, 0.1).asDiagonal();
  c.variant = variant;
  return c;
}

TerminalEval terminal_cost(const Certificate& cert, const Eigen::VectorXd& x) {
  const Eigen::VectorXd Mcx = cert.Mc * x;
  const Eigen::VectorXd Mqx = cert.Mq * x;
  const double q = std::max(0.0, x.dot(Mcx));
  const double r = std::sqrt(q);
  TerminalEval out;
  out.value = cert.theta * (x.dot(Mqx) + cert.lambda * q * r);
  out.gradient = cert.theta * (2.0 * Mqx + 3.0 * cert.lambda * r * Mcx);
  out.hessian = 2.0 * cert.Mq + 3.0 * cert.lambda * r * cert.Mc;
  if (r > 0.0) out.hessian += (3.0 * cert.lambda / r) * Mcx * Mcx.transpose();
  out.hessian *= cert.theta;
  return out;
}

bool InputBounds::contains(const Vec3& u, double tol) const {
  for (std::size_t j = 0; j < normals.size(); ++j) {
    const double c = normals[j].dot(u);
    if (c < lo[j] - tol || c > up[j] + tol) return false;
  }
  return true;
}

bool InputBounds::empty() const {
  for (std::size_t j = 0; j < normals.size(); ++j) {
    if (lo[j] > up[j]) return true;
  }
  return false;
}

InputBounds to_input_bounds(const SlabSet& s) {
  InputBounds b;
  b.normals.assign(face_normals().begin(), face_normals().end());
  b.lo.assign(s.lo.begin(), s.lo.end());
  b.up.assign(s.up.begin(), s.up.end());
  return b;
}

namespace {

// Per-axis interval for the decoupled/baseline variants: the scalar analogues
// of the a_d and eta maps at levels (level_now, level_next).
InputBounds axis_bounds(const DiscreteModel& model, const OuterState& x, double level_now,
                        double level_next) {
  const double a = model.alpha;
  const double b = model.beta;
  InputBounds out;
  for (int axis = 0; axis < 3; ++axis) {
    const double ad = x.a_d(axis);
    const double eta = x.eta(axis);
    const double lo = std::max({-level_now, (-level_next - a * ad - b * eta) / (1.0 - a - b),
                                (-level_next - a * eta) / (1.0 - a)});
    const double up = std::min({level_now, (level_next - a * ad - b * eta) / (1.0 - a - b),
                                (level_next - a * eta) / (1.0 - a)});
    out.normals.push_back(Vec3::Unit(axis));
    out.lo.push_back(lo);
    out.up.push_back(up);
  }
  return out;
}

std::pair<double, double> variant_levels(Variant variant, double rho_now, double rho_next,
                                         double baseline_level) {
  switch (variant) {
    case Variant::Coupled: return {rho_now, rho_next};
    case Variant::Decoupled: return {rho_now / std::sqrt(3.0), rho_next / std::sqrt(3.0)};
    case Variant::Baseline: return {baseline_level, baseline_level};
  }
  return {0.0, 0.0};
}

}  // namespace

InputBounds variant_constraints(Variant variant, double rho_now, double rho_next,
                                const OuterState& x_i, const DiscreteModel& model,
                                double baseline_level) {
  if (!(rho_now > 0.0) || !(rho_next > 0.0)) {
    throw InvalidArgument("variant_constraints: rho must be positive");
  }
  if (variant == Variant::Coupled) {
    return to_input_bounds(unified_input_set(model, x_i, rho_now, rho_next));
  }
  if (variant == Variant::Baseline && !(baseline_level > 0.0)) {
    throw InvalidArgument("variant_constraints: baseline level must be positive");
  }
  const auto [now, next] = variant_levels(variant, rho_now, rho_next, baseline_level);
  InputBounds b = axis_bounds(model, x_i, now, next);
  for (int axis = 0; axis < 3; ++axis) {
    if (b.lo[axis] > b.up[axis]) {
      throw EmptyInputSet("per-axis input interval is empty on axis " + std::to_string(axis),
                          axis);
    }
  }
  return b;
}

StageConstraints stage_constraints(Variant variant, double rho_now, double rho_next,
                                   const DiscreteModel& model, double baseline_level) {
  const auto [now, next] = variant_levels(variant, rho_now, rho_next, baseline_level);
  std::vector<Vec3> normals;
  if (variant == Variant::Coupled) {
    normals.assign(face_normals().begin(), face_normals().end());
  } else {
    normals = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  }

  const double a = model.alpha;
  const double b = model.beta;
  const auto rows = static_cast<Eigen::Index>(6 * normals.size());
  StageConstraints c;
  c.Gx = Eigen::MatrixXd::Zero(rows, 12);
  c.Gu = Eigen::MatrixXd::Zero(rows, 3);
  c.g = Eigen::VectorXd::Zero(rows);

  Eigen::Index r = 0;
  for (const Vec3& n : normals) {
    for (double sign : {1.0, -1.0}) {
      // input level: sign n.u <= now
      c.Gu.row(r) = sign * n.transpose();
      c.g(r) = now;
      ++r;
      // next a_d: sign n.(a a_d + b eta + (1-a-b) u) <= next
      for (int axis = 0; axis < 3; ++axis) {
        c.Gx(r, state_index(axis, Block::Accel)) = sign * a * n(axis);
        c.Gx(r, state_index(axis, Block::Filter)) = sign * b * n(axis);
      }
      c.Gu.row(r) = sign * (1.0 - a - b) * n.transpose();
      c.g(r) = next;
      ++r;
      // next eta: sign n.(a eta + (1-a) u) <= next
      for (int axis = 0; axis < 3; ++axis) {
        c.Gx(r, state_index(axis, Block::Filter)) = sign * a * n(axis);
      }
      c.Gu.row(r) = sign * (1.0 - a) * n.transpose();
      c.g(r) = next;
      ++r;
    }
  }
  return c;
}

std::vector<double> rho_window(const RhoSchedule& schedule, int k, int horizon) {
  std::vector<double> rho(horizon + 1);
  for (int i = 0; i <= horizon; ++i) rho[i] = schedule.at(static_cast<std::size_t>(k + i));
  return rho;
}

MpcSolution solve(const MpcConfig& config, const Certificate& cert, const DiscreteModel& model,
                  const Vec12& x0, const std::vector<double>& rho, double baseline_level,
                  const IpmIterate* warm) {
  const int N = config.horizon;
  if (N < 1) throw InvalidArgument("MPC horizon must be >= 1");
  if (static_cast<int>(rho.size()) < N + 1) {
    throw InvalidArgument("MPC needs rho_{i|k} for i = 0..N");
  }

  const auto start = std::chrono::steady_clock::now();

  OcpProblem pb;
  pb.A = model.Ad;
  pb.B = model.Bd;
  pb.Q = config.Q;
  pb.R = config.R;
  pb.x_init = x0;
  pb.stages.reserve(N);
  for (int i = 0; i < N; ++i) {
    pb.stages.push_back(
        stage_constraints(config.variant, rho[i], rho[i + 1], model, baseline_level));
  }
  pb.terminal = [&cert](const Eigen::VectorXd& x) { return terminal_cost(cert, x); };

  IpmSettings settings;
  settings.tolerance = config.kkt_tolerance;
  settings.max_iterations = config.max_iterations;
  IpmResult r = solve_ocp(pb, settings, warm);

  MpcSolution sol;
  sol.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  sol.cost = r.cost;
  sol.kkt_residual = r.kkt_residual;
  sol.iterations = r.iterations;
  sol.converged = r.converged;
  for (const auto& x : r.iterate.X) sol.X.emplace_back(x);
  for (const auto& u : r.iterate.U) sol.U.emplace_back(u);

  // Active set of the applied input against the first-stage bounds.
  const OuterState s0 = OuterState::from_stacked(sol.X[0]);
  const auto [now, next] = variant_levels(config.variant, rho[0], rho[1], baseline_level);
  InputBounds b;
  if (config.variant == Variant::Coupled) {
    const SlabSet ad = map_ad_constraint(model, s0, rho[1]);
    const SlabSet eta = map_eta_constraint(model, s0, rho[1]);
    b.normals.assign(face_normals().begin(), face_normals().end());
    for (int j = 0; j < kNumFaces; ++j) {
      b.lo.push_back(std::max({ad.lo[j], eta.lo[j], -rho[0]}));
      b.up.push_back(std::min({ad.up[j], eta.up[j], rho[0]}));
    }
  } else {
    b = axis_bounds(model, s0, now, next);
  }
  for (std::size_t j = 0; j < b.normals.size(); ++j) {
    const double c = b.normals[j].dot(sol.U[0]);
    const double tol = 1e-6 * std::max(1.0, std::abs(b.up[j]));
    if (std::abs(c - b.up[j]) <= tol) sol.active_mask |= 1u << (2 * j);
    if (std::abs(c - b.lo[j]) <= tol) sol.active_mask |= 1u << (2 * j + 1);
  }

  sol.iterate = std::move(r.iterate);
  return sol;
}

MpcController::MpcController(MpcConfig config, std::shared_ptr<const Certificate> cert,
                             DiscreteModel model, std::shared_ptr<const RhoSchedule> schedule)
    : config_(std::move(config)),
      cert_(std::move(cert)),
      model_(std::move(model)),
      schedule_(std::move(schedule)) {
  if (!cert_ || !schedule_) throw InvalidArgument("MpcController needs a certificate and schedule");
  baseline_level_ = schedule_->minimum() / std::sqrt(3.0);
}

Vec3 MpcController::step(const Vec12& x_k, int k, StepDiagnostics* diag) {
  const std::vector<double> rho = rho_window(*schedule_, k, config_.horizon);

  IpmIterate warm;
  const IpmIterate* warm_ptr = nullptr;
  if (config_.warm_start && has_previous_) {
    // Shift by one stage and hold the last input.
    const IpmIterate& prev = last_.iterate;
    const int N = config_.horizon;
    warm.X.assign(prev.X.begin() + 1, prev.X.end());
    warm.X.push_back(model_.Ad * prev.X[N] + model_.Bd * prev.U[N - 1]);
    warm.U.assign(prev.U.begin() + 1, prev.U.end());
    warm.U.push_back(prev.U[N - 1]);
    warm.dual.assign(prev.dual.begin() + 1, prev.dual.end());
    warm.dual.push_back(prev.dual[N - 1]);
    warm.costate.assign(prev.costate.begin() + 1, prev.costate.end());
    warm.costate.push_back(prev.costate[N]);
    warm_ptr = &warm;
  }

  last_ = solve(config_, *cert_, model_, x_k, rho, baseline_level_, warm_ptr);
  has_previous_ = true;

  if (diag != nullptr) {
    diag->k = k;
    diag->solve_time = last_.solve_time;
    diag->iterations = last_.iterations;
    diag->kkt_residual = last_.kkt_residual;
    diag->cost = last_.cost;
    diag->active_mask = last_.active_mask;
    diag->converged = last_.converged;
  }
  return last_.U[0];
}

}  // namespace quadmpc
