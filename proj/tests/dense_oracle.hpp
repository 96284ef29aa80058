#pragma once

#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "quadmpc/ipm.hpp"
#include "quadmpc/mpc.hpp"
#include "test_support.hpp"

namespace quadmpc::testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Condensed objective f(U) = sum x_i'Q x_i + u_i'R u_i + V(x_N) with
// x = Phi x0 + Gamma U, and the constraints as rows of C U <= d.
struct DenseProblem {
  MatrixXd H;      // Hessian of the stage quadratic part
  VectorXd f;      // its linear term
  double c0 = 0.0;
  MatrixXd EN;     // x_N = aN + EN U
  VectorXd aN;
  TerminalFn terminal;
  MatrixXd C;
  VectorXd d;

  double value(const VectorXd& U) const {
    return 0.5 * U.dot(H * U) + f.dot(U) + c0 + terminal(aN + EN * U).value;
  }
  VectorXd gradient(const VectorXd& U) const {
    return H * U + f + EN.transpose() * terminal(aN + EN * U).gradient;
  }
  MatrixXd hessian(const VectorXd& U) const {
    return H + EN.transpose() * terminal(aN + EN * U).hessian * EN;
  }
};

inline DenseProblem condense(const OcpProblem& pb) {
  const int N = pb.horizon();
  const Eigen::Index nx = pb.A.rows(), nu = pb.B.cols(), nU = N * nu;
  std::vector<VectorXd> a(N + 1);
  std::vector<MatrixXd> E(N + 1);
  a[0] = pb.x_init;
  E[0] = MatrixXd::Zero(nx, nU);
  for (int i = 0; i < N; ++i) {
    a[i + 1] = pb.A * a[i];
    E[i + 1] = pb.A * E[i];
    E[i + 1].middleCols(i * nu, nu) += pb.B;
  }
  DenseProblem d;
  d.H = MatrixXd::Zero(nU, nU);
  d.f = VectorXd::Zero(nU);
  Eigen::Index rows = 0;
  for (const auto& s : pb.stages) rows += s.rows();
  d.C = MatrixXd::Zero(rows, nU);
  d.d = VectorXd::Zero(rows);
  Eigen::Index r = 0;
  for (int i = 0; i < N; ++i) {
    d.H += 2.0 * E[i].transpose() * pb.Q * E[i];
    d.H.block(i * nu, i * nu, nu, nu) += 2.0 * pb.R;
    d.f += 2.0 * E[i].transpose() * pb.Q * a[i];
    d.c0 += a[i].dot(pb.Q * a[i]);
    const auto& s = pb.stages[i];
    MatrixXd Cu = s.Gx * E[i];
    Cu.middleCols(i * nu, nu) += s.Gu;
    d.C.middleRows(r, s.rows()) = Cu;
    d.d.segment(r, s.rows()) = s.g - s.Gx * a[i];
    r += s.rows();
  }
  d.EN = E[N];
  d.aN = a[N];
  d.terminal = pb.terminal;
  return d;
}

// Damped Newton for min f(U0 + Z t).
inline VectorXd newton_on_subspace(const DenseProblem& p, const VectorXd& U0, const MatrixXd& Z) {
  if (Z.cols() == 0) return U0;
  VectorXd t = VectorXd::Zero(Z.cols());
  for (int it = 0; it < 200; ++it) {
    const VectorXd U = U0 + Z * t;
    const VectorXd g = Z.transpose() * p.gradient(U);
    if (g.norm() <= 1e-12 * (1.0 + std::abs(p.value(U)))) break;
    const MatrixXd H = Z.transpose() * p.hessian(U) * Z;
    const VectorXd step = -H.ldlt().solve(g);
    double a = 1.0;
    const double f0 = p.value(U);
    while (a > 1e-12 && p.value(U0 + Z * (t + a * step)) > f0 + 1e-4 * a * g.dot(step)) a *= 0.5;
    t += a * step;
    if ((a * step).norm() <= 1e-15 * (1.0 + t.norm())) break;
  }
  return U0 + Z * t;
}

// Minimum over every active set with at most nU linearly independent rows.
inline VectorXd enumerate_active_sets(const DenseProblem& p, int max_active) {
  const Eigen::Index m = p.C.rows(), n = p.H.rows();
  double best = std::numeric_limits<double>::infinity();
  VectorXd best_U;
  std::vector<int> idx;
  auto visit = [&](const std::vector<int>& set) {
    MatrixXd G(set.size(), n);
    VectorXd b(set.size());
    for (std::size_t k = 0; k < set.size(); ++k) {
      G.row(k) = p.C.row(set[k]);
      b(k) = p.d(set[k]);
    }
    VectorXd U0 = VectorXd::Zero(n);
    MatrixXd Z = MatrixXd::Identity(n, n);
    if (!set.empty()) {
      Eigen::FullPivLU<MatrixXd> lu(G);
      if (lu.rank() < static_cast<Eigen::Index>(set.size())) return;
      U0 = G.completeOrthogonalDecomposition().solve(b);
      Z = lu.kernel();
      if (Z.cols() == 1 && Z.norm() == 0.0) Z.resize(n, 0);
    }
    const VectorXd U = newton_on_subspace(p, U0, Z);
    if (((p.C * U - p.d).array() > 1e-9).any()) return;
    const double v = p.value(U);
    if (v < best) {
      best = v;
      best_U = U;
    }
  };
  std::function<void(int)> rec = [&](int start) {
    visit(idx);
    if (static_cast<int>(idx.size()) == max_active) return;
    for (Eigen::Index r = start; r < m; ++r) {
      idx.push_back(static_cast<int>(r));
      rec(static_cast<int>(r) + 1);
      idx.pop_back();
    }
  };
  rec(0);
  return best_U;
}

// Single-axis reduced model with the per-axis filter constraints.
inline OcpProblem axis_problem(const Eigen::Vector4d& x0, int N, double rho, const Certificate& cert) {
  const DiscreteModel& m = default_model();
  OcpProblem pb;
  pb.A = m.Ad.topLeftCorner(4, 4);
  pb.B = m.Bd.topLeftCorner(4, 1);
  pb.Q = Eigen::Vector4d(100.0, 1.0, 1.0, 1.0).asDiagonal();
  pb.R = MatrixXd::Constant(1, 1, 0.01);
  pb.x_init = x0;
  const double a = m.alpha, b = m.beta;
  for (int i = 0; i < N; ++i) {
    StageConstraints s;
    s.Gx = MatrixXd::Zero(6, 4);
    s.Gu = MatrixXd::Zero(6, 1);
    s.g = VectorXd::Constant(6, rho);
    int r = 0;
    for (double sign : {1.0, -1.0}) {
      s.Gu(r++, 0) = sign;
      s.Gx(r, 2) = sign * a;
      s.Gx(r, 3) = sign * b;
      s.Gu(r++, 0) = sign * (1.0 - a - b);
      s.Gx(r, 3) = sign * a;
      s.Gu(r++, 0) = sign * (1.0 - a);
    }
    pb.stages.push_back(s);
  }
  pb.terminal = [cert](const VectorXd& x) { return terminal_cost(cert, x); };
  return pb;
}

inline Certificate axis_certificate() {
  const DiscreteModel& m = default_model();
  return build_certificate(m.Ad.topLeftCorner(4, 4), m.Bd.topLeftCorner(4, 1),
                           Eigen::Vector4d(100.0, 1.0, 1.0, 1.0).asDiagonal().toDenseMatrix(),
                           MatrixXd::Constant(1, 1, 0.01), 4.0);
}

}  // namespace quadmpc::testing
