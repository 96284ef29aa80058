#include "quadmpc/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "quadmpc/types.hpp"

namespace quadmpc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kFractionToBoundary = 0.995;
constexpr double kStartFloor = 1.0;
constexpr double kScaleFloor = 100.0;

// Rows are scaled to unit norm over [Gx Gu] so that slacks and multipliers of
// different constraint families are commensurate.
std::vector<StageConstraints> normalize_rows(const std::vector<StageConstraints>& in) {
  std::vector<StageConstraints> out = in;
  for (auto& c : out) {
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      const double norm =
          std::sqrt(c.Gx.row(r).squaredNorm() + c.Gu.row(r).squaredNorm());
      if (norm > 0.0) {
        c.Gx.row(r) /= norm;
        c.Gu.row(r) /= norm;
        c.g(r) /= norm;
      }
    }
  }
  return out;
}

struct Residuals {
  std::vector<VectorXd> eq;      // N + 1: e_0 = x_init - x_0, e_{i+1} = A x_i + B u_i - x_{i+1}
  std::vector<VectorXd> ineq;    // N: G z + s - g
  std::vector<VectorXd> grad_x;  // N + 1: objective gradient
  std::vector<VectorXd> grad_u;  // N
  double stationarity = 0.0;
  double eq_norm = 0.0;
  double ineq_norm = 0.0;
  double gap = 0.0;              // s' lambda
  double scale = 1.0;            // max(1, largest objective gradient entry / 100)
  Eigen::Index m_total = 0;

  double kkt() const {
    return std::max({stationarity / scale, eq_norm, ineq_norm, gap / scale});
  }
};

class RiccatiSolver {
 public:
  RiccatiSolver(const OcpProblem& pb, const std::vector<StageConstraints>& con)
      : pb_(pb), con_(con), N_(pb.horizon()) {
    P_.resize(N_ + 1);
    K_.resize(N_);
    Qux_.resize(N_);
    Quu_.resize(N_);
  }

  // Backward pass over the Hessian blocks; D_i = lambda_i / s_i.
  void factor(const MatrixXd& terminal_hessian, const std::vector<VectorXd>& D) {
    D_ = &D;
    const MatrixXd& A = pb_.A;
    const MatrixXd& B = pb_.B;
    P_[N_] = terminal_hessian;
    for (int i = N_ - 1; i >= 0; --i) {
      const auto& c = con_[i];
      const MatrixXd DGx = D[i].asDiagonal() * c.Gx;
      const MatrixXd DGu = D[i].asDiagonal() * c.Gu;
      const MatrixXd PA = P_[i + 1] * A;
      const MatrixXd PB = P_[i + 1] * B;
      MatrixXd Qxx = 2.0 * pb_.Q + c.Gx.transpose() * DGx + A.transpose() * PA;
      MatrixXd Quu = 2.0 * pb_.R + c.Gu.transpose() * DGu + B.transpose() * PB;
      Qux_[i] = c.Gu.transpose() * DGx + B.transpose() * PA;
      Quu_[i].compute(0.5 * (Quu + Quu.transpose()));
      if (Quu_[i].info() != Eigen::Success) {
        // Shifted factor; solve_refined() removes the shift from the step.
        const double shift = 1e-12 * Quu.diagonal().cwiseAbs().maxCoeff();
        Quu_[i].compute(0.5 * (Quu + Quu.transpose()) +
                        shift * MatrixXd::Identity(Quu.rows(), Quu.cols()));
        if (Quu_[i].info() != Eigen::Success) {
          throw Error("IPM: stage Hessian not positive definite");
        }
      }
      K_[i] = -Quu_[i].solve(Qux_[i]);
      MatrixXd P = Qxx + Qux_[i].transpose() * K_[i];
      P_[i] = 0.5 * (P + P.transpose());
    }
  }

  // Solves the equality-constrained Newton QP with stage gradients gx, gu,
  // terminal gradient gN and dynamics offsets e. Returns new costates.
  void solve(const std::vector<VectorXd>& gx, const std::vector<VectorXd>& gu, const VectorXd& gN,
             const std::vector<VectorXd>& e, std::vector<VectorXd>& dX,
             std::vector<VectorXd>& dU, std::vector<VectorXd>& costate) const {
    const MatrixXd& A = pb_.A;
    const MatrixXd& B = pb_.B;
    std::vector<VectorXd> p(N_ + 1);
    std::vector<VectorXd> k(N_);
    p[N_] = gN;
    for (int i = N_ - 1; i >= 0; --i) {
      const VectorXd Pc = P_[i + 1] * e[i + 1] + p[i + 1];
      const VectorXd qx = gx[i] + A.transpose() * Pc;
      const VectorXd qu = gu[i] + B.transpose() * Pc;
      k[i] = -Quu_[i].solve(qu);
      p[i] = qx + Qux_[i].transpose() * k[i];
    }
    dX.resize(N_ + 1);
    dU.resize(N_);
    costate.resize(N_ + 1);
    dX[0] = e[0];
    for (int i = 0; i < N_; ++i) {
      dU[i] = K_[i] * dX[i] + k[i];
      dX[i + 1] = A * dX[i] + B * dU[i] + e[i + 1];
      costate[i] = P_[i] * dX[i] + p[i];
    }
    costate[N_] = P_[N_] * dX[N_] + p[N_];
  }

  // solve() followed by iterative refinement against the unfactored system.
  void solve_refined(const std::vector<VectorXd>& gx, const std::vector<VectorXd>& gu,
                     const VectorXd& gN, const std::vector<VectorXd>& e,
                     std::vector<VectorXd>& dX, std::vector<VectorXd>& dU,
                     std::vector<VectorXd>& costate, int rounds = 2) const {
    solve(gx, gu, gN, e, dX, dU, costate);
    const MatrixXd& A = pb_.A;
    const MatrixXd& B = pb_.B;
    std::vector<VectorXd> rx(N_), ru(N_), zero(N_ + 1, VectorXd::Zero(A.rows()));
    std::vector<VectorXd> cX, cU, cL;
    for (int round = 0; round < rounds; ++round) {
      for (int i = 0; i < N_; ++i) {
        const auto& c = con_[i];
        const VectorXd Dg = (*D_)[i].cwiseProduct(c.Gx * dX[i] + c.Gu * dU[i]);
        rx[i] = 2.0 * pb_.Q * dX[i] + c.Gx.transpose() * Dg + gx[i] - costate[i] +
                A.transpose() * costate[i + 1];
        ru[i] = 2.0 * pb_.R * dU[i] + c.Gu.transpose() * Dg + gu[i] + B.transpose() * costate[i + 1];
      }
      const VectorXd rN = P_[N_] * dX[N_] + gN - costate[N_];
      solve(rx, ru, rN, zero, cX, cU, cL);
      for (int i = 0; i <= N_; ++i) {
        dX[i] += cX[i];
        costate[i] += cL[i];
      }
      for (int i = 0; i < N_; ++i) dU[i] += cU[i];
    }
  }

 private:
  const OcpProblem& pb_;
  const std::vector<StageConstraints>& con_;
  int N_;
  std::vector<MatrixXd> P_;
  std::vector<MatrixXd> K_;
  std::vector<MatrixXd> Qux_;
  std::vector<Eigen::LLT<MatrixXd>> Quu_;
  const std::vector<VectorXd>* D_ = nullptr;
};

Residuals evaluate(const OcpProblem& pb, const std::vector<StageConstraints>& con,
                   const IpmIterate& it, const TerminalEval& term) {
  const int N = pb.horizon();
  Residuals r;
  r.eq.resize(N + 1);
  r.ineq.resize(N);
  r.grad_x.resize(N + 1);
  r.grad_u.resize(N);

  r.eq[0] = pb.x_init - it.X[0];
  for (int i = 0; i < N; ++i) {
    r.eq[i + 1] = pb.A * it.X[i] + pb.B * it.U[i] - it.X[i + 1];
    r.ineq[i] = con[i].Gx * it.X[i] + con[i].Gu * it.U[i] + it.slack[i] - con[i].g;
    r.grad_x[i] = 2.0 * pb.Q * it.X[i];
    r.grad_u[i] = 2.0 * pb.R * it.U[i];
  }
  r.grad_x[N] = term.gradient;
  for (int i = 0; i <= N; ++i) {
    r.scale = std::max(r.scale, r.grad_x[i].lpNorm<Eigen::Infinity>() / kScaleFloor);
    if (i < N) r.scale = std::max(r.scale, r.grad_u[i].lpNorm<Eigen::Infinity>() / kScaleFloor);
  }

  for (int i = 0; i <= N; ++i) r.eq_norm = std::max(r.eq_norm, r.eq[i].lpNorm<Eigen::Infinity>());
  for (int i = 0; i < N; ++i) {
    const VectorXd sx = r.grad_x[i] + con[i].Gx.transpose() * it.dual[i] - it.costate[i] +
                        pb.A.transpose() * it.costate[i + 1];
    const VectorXd su =
        r.grad_u[i] + con[i].Gu.transpose() * it.dual[i] + pb.B.transpose() * it.costate[i + 1];
    r.stationarity = std::max({r.stationarity, sx.lpNorm<Eigen::Infinity>(),
                               su.lpNorm<Eigen::Infinity>()});
    if (r.ineq[i].size() > 0) {
      r.ineq_norm = std::max(r.ineq_norm, r.ineq[i].lpNorm<Eigen::Infinity>());
    }
    r.gap += it.slack[i].dot(it.dual[i]);
    r.m_total += con[i].rows();
  }
  r.stationarity =
      std::max(r.stationarity, (r.grad_x[N] - it.costate[N]).lpNorm<Eigen::Infinity>());
  return r;
}

double max_step(const std::vector<VectorXd>& v, const std::vector<VectorXd>& dv) {
  double a = 1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (Eigen::Index j = 0; j < v[i].size(); ++j) {
      if (dv[i](j) < 0.0) a = std::min(a, -v[i](j) / dv[i](j));
    }
  }
  return a;
}

}  // namespace

double ocp_cost(const OcpProblem& pb, const std::vector<VectorXd>& X,
                const std::vector<VectorXd>& U) {
  double J = pb.terminal(X.back()).value;
  for (std::size_t i = 0; i < U.size(); ++i) {
    J += X[i].dot(pb.Q * X[i]) + U[i].dot(pb.R * U[i]);
  }
  return J;
}

IpmResult solve_ocp(const OcpProblem& pb, const IpmSettings& settings, const IpmIterate* warm) {
  const int N = pb.horizon();
  const Eigen::Index nx = pb.A.rows();
  const Eigen::Index nu = pb.B.cols();
  if (N < 1) throw InvalidArgument("solve_ocp: horizon must be >= 1");
  if (pb.A.cols() != nx || pb.B.rows() != nx || pb.x_init.size() != nx ||
      pb.Q.rows() != nx || pb.R.rows() != nu) {
    throw InvalidArgument("solve_ocp: inconsistent problem dimensions");
  }
  for (const auto& c : pb.stages) {
    if (c.Gx.cols() != nx || c.Gu.cols() != nu || c.Gx.rows() != c.rows() ||
        c.Gu.rows() != c.rows()) {
      throw InvalidArgument("solve_ocp: inconsistent constraint dimensions");
    }
  }

  const std::vector<StageConstraints> con = normalize_rows(pb.stages);

  IpmIterate it;
  it.X.resize(N + 1);
  it.U.resize(N);
  it.slack.resize(N);
  it.dual.resize(N);
  it.costate.assign(N + 1, VectorXd::Zero(nx));

  const bool use_warm = warm != nullptr && static_cast<int>(warm->U.size()) == N &&
                        static_cast<int>(warm->X.size()) == N + 1;
  if (use_warm) {
    it.X = warm->X;
    it.U = warm->U;
    it.X[0] = pb.x_init;
  } else {
    it.X[0] = pb.x_init;
    for (int i = 0; i < N; ++i) {
      it.U[i] = VectorXd::Zero(nu);
      it.X[i + 1] = pb.A * it.X[i];
    }
  }
  const bool warm_duals = use_warm && static_cast<int>(warm->dual.size()) == N;
  for (int i = 0; i < N; ++i) {
    const VectorXd margin = con[i].g - con[i].Gx * it.X[i] - con[i].Gu * it.U[i];
    it.slack[i] = margin.cwiseMax(kStartFloor);
    if (warm_duals && warm->dual[i].size() == con[i].rows()) {
      it.dual[i] = warm->dual[i].cwiseMax(kStartFloor);
    } else {
      it.dual[i] = VectorXd::Ones(con[i].rows());
    }
  }
  if (use_warm && static_cast<int>(warm->costate.size()) == N + 1) it.costate = warm->costate;

  RiccatiSolver riccati(pb, con);
  IpmResult result;

  std::vector<VectorXd> D(N), gx(N), gu(N), dX, dU, costate_new;
  std::vector<VectorXd> ds(N), dl(N), rc(N);
  std::vector<VectorXd> dX_aff, dU_aff, cost_aff;
  std::vector<VectorXd> ds_aff(N), dl_aff(N);

  for (int iter = 0;; ++iter) {
    const TerminalEval term = pb.terminal(it.X[N]);
    const Residuals res = evaluate(pb, con, it, term);
    result.kkt_residual = res.kkt();
    result.iterations = iter;
    if (result.kkt_residual <= settings.tolerance) {
      result.converged = true;
      break;
    }
    if (iter >= settings.max_iterations) break;

    const double mu = res.m_total > 0 ? res.gap / static_cast<double>(res.m_total) : 0.0;
    for (int i = 0; i < N; ++i) D[i] = it.dual[i].cwiseQuotient(it.slack[i]);
    riccati.factor(term.hessian, D);

    // Newton direction for a given complementarity target rc = s.*l - target.
    auto direction = [&](const std::vector<VectorXd>& rcent, std::vector<VectorXd>& dXo,
                         std::vector<VectorXd>& dUo, std::vector<VectorXd>& cost_o,
                         std::vector<VectorXd>& dso, std::vector<VectorXd>& dlo) {
      for (int i = 0; i < N; ++i) {
        const VectorXd w =
            it.dual[i] + (it.dual[i].cwiseProduct(res.ineq[i]) - rcent[i]).cwiseQuotient(it.slack[i]);
        gx[i] = res.grad_x[i] + con[i].Gx.transpose() * w;
        gu[i] = res.grad_u[i] + con[i].Gu.transpose() * w;
      }
      riccati.solve_refined(gx, gu, res.grad_x[N], res.eq, dXo, dUo, cost_o);
      for (int i = 0; i < N; ++i) {
        dso[i] = -res.ineq[i] - con[i].Gx * dXo[i] - con[i].Gu * dUo[i];
        dlo[i] = (-rcent[i] - it.dual[i].cwiseProduct(dso[i])).cwiseQuotient(it.slack[i]);
      }
    };

    // Predictor.
    for (int i = 0; i < N; ++i) rc[i] = it.slack[i].cwiseProduct(it.dual[i]);
    direction(rc, dX_aff, dU_aff, cost_aff, ds_aff, dl_aff);
    const double a_aff = std::min(max_step(it.slack, ds_aff), max_step(it.dual, dl_aff));
    double gap_aff = 0.0;
    for (int i = 0; i < N; ++i) {
      gap_aff += (it.slack[i] + a_aff * ds_aff[i]).dot(it.dual[i] + a_aff * dl_aff[i]);
    }
    const double mu_aff = res.m_total > 0 ? gap_aff / static_cast<double>(res.m_total) : 0.0;
    const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;

    // Corrector.
    for (int i = 0; i < N; ++i) {
      rc[i] = it.slack[i].cwiseProduct(it.dual[i]) + ds_aff[i].cwiseProduct(dl_aff[i]) -
              VectorXd::Constant(it.slack[i].size(), sigma * mu);
    }
    direction(rc, dX, dU, costate_new, ds, dl);
    const double a_max = std::min(max_step(it.slack, ds), max_step(it.dual, dl));
    const double a = std::min(1.0, kFractionToBoundary * a_max);

    for (int i = 0; i <= N; ++i) {
      it.X[i] += a * dX[i];
      it.costate[i] += a * (costate_new[i] - it.costate[i]);
    }
    for (int i = 0; i < N; ++i) {
      it.U[i] += a * dU[i];
      it.slack[i] += a * ds[i];
      it.dual[i] += a * dl[i];
    }
  }

  result.cost = ocp_cost(pb, it.X, it.U);
  result.iterate = std::move(it);
  return result;
}

}  // namespace quadmpc
