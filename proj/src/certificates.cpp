#include "quadmpc/certificates.hpp"

#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <lapacke.h>

namespace quadmpc {

namespace {

constexpr double kUnitCircleTol = 1e-9;
constexpr double kDefectiveCond = 1e8;

lapack_logical on_unit_circle(const double* re, const double* im) {
  return std::hypot(*re, *im) >= 1.0 - kUnitCircleTol;
}

double max_eigenvalue(const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}

double min_eigenvalue(const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

// Weight P with T' P T = P on the unit-circle block. Identity when T is
// orthogonal; otherwise V^{-H} V^{-1} from a well-conditioned eigenbasis.
Eigen::MatrixXd unit_block_weight(const Eigen::MatrixXd& T) {
  const Eigen::Index n = T.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  if ((T.transpose() * T - I).norm() <= 1e-10) return I;

  Eigen::EigenSolver<Eigen::MatrixXd> es(T);
  if (es.info() != Eigen::Success) {
    throw NotMarginallyStable("eigen decomposition of the unit-circle block failed");
  }
  const Eigen::MatrixXcd V = es.eigenvectors();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > kDefectiveCond) {
    throw NotMarginallyStable("unit-circle eigenvalue is defective (non-semisimple)");
  }
  const Eigen::MatrixXcd Vinv = V.inverse();
  Eigen::MatrixXd P = (Vinv.adjoint() * Vinv).real();
  return 0.5 * (P + P.transpose());
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != c) {
      throw InvalidArgument("ragged matrix in certificate JSON");
    }
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = rows[i][j].get<double>();
  }
  return M;
}

}  // namespace

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd compute_Mc(const Eigen::MatrixXd& Ad) {
  if (Ad.rows() != Ad.cols() || Ad.rows() == 0) {
    throw InvalidArgument("compute_Mc: Ad must be square and non-empty");
  }
  const auto n = static_cast<lapack_int>(Ad.rows());

  Eigen::MatrixXd T = Ad;
  Eigen::MatrixXd U(n, n);
  Eigen::VectorXd wr(n), wi(n);
  lapack_int sdim = 0;
  const lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S', on_unit_circle, n, T.data(),
                                        n, &sdim, wr.data(), wi.data(), U.data(), n);
  if (info != 0) {
    throw NotMarginallyStable("real Schur decomposition failed (info=" + std::to_string(info) +
                              ")");
  }
  for (lapack_int i = 0; i < n; ++i) {
    if (std::hypot(wr(i), wi(i)) > 1.0 + kUnitCircleTol) {
      throw NotMarginallyStable("eigenvalue outside the closed unit disk: |lambda| = " +
                                std::to_string(std::hypot(wr(i), wi(i))));
    }
  }

  const lapack_int nu = sdim;
  const lapack_int ns = n - nu;

  // Block-diagonalize: with T11 Y - Y T22 = -T12,
  // [I -Y; 0 I] T [I Y; 0 I] = diag(T11, T22).
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(nu, ns);
  if (nu > 0 && ns > 0) {
    Eigen::MatrixXd T11 = T.topLeftCorner(nu, nu);
    Eigen::MatrixXd T22 = T.bottomRightCorner(ns, ns);
    Eigen::MatrixXd C = -T.topRightCorner(nu, ns);
    double scale = 1.0;
    const lapack_int sinfo = LAPACKE_dtrsyl(LAPACK_COL_MAJOR, 'N', 'N', -1, nu, ns, T11.data(),
                                            nu, T22.data(), ns, C.data(), nu, &scale);
    if (sinfo < 0) throw Error("Sylvester solve failed in compute_Mc");
    Y = C / scale;
  }

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  if (nu > 0) P.topLeftCorner(nu, nu) = unit_block_weight(T.topLeftCorner(nu, nu));
  if (ns > 0) {
    P.bottomRightCorner(ns, ns) = solve_discrete_lyapunov(
        T.bottomRightCorner(ns, ns), Eigen::MatrixXd::Identity(ns, ns), 1e-12);
  }

  // x = U S z, so Mc = (U S)^{-T} P (U S)^{-1} with S^{-1} = [I -Y; 0 I].
  Eigen::MatrixXd Sinv = Eigen::MatrixXd::Identity(n, n);
  Sinv.topRightCorner(nu, ns) = -Y;
  const Eigen::MatrixXd Winv = Sinv * U.transpose();
  Eigen::MatrixXd Mc = Winv.transpose() * P * Winv;
  return 0.5 * (Mc + Mc.transpose());
}

SmallGain compute_small_gain(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd,
                             const Eigen::MatrixXd& Mc) {
  const Eigen::MatrixXd BtMcB = Bd.transpose() * Mc * Bd;
  const double top = BtMcB.size() == 0 ? 0.0 : max_eigenvalue(BtMcB);
  if (!(top > 0.0)) {
    throw DegenerateInput("compute_small_gain: lambda_max(Bd' Mc Bd) = 0");
  }
  SmallGain out;
  out.kappa = kKappaMargin / top;
  out.K = -out.kappa * Bd.transpose() * Mc * Ad;
  const double rho = spectral_radius(Ad + Bd * out.K);
  if (!(rho < 1.0)) {
    throw NotSchurStable("small-gain closed loop is not Schur stable (spectral radius " +
                         std::to_string(rho) + ")");
  }
  return out;
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q,
                                        double tol) {
  const double rho = spectral_radius(A);
  if (!(rho < 1.0)) {
    throw NotSchurStable("discrete Lyapunov equation: spectral radius " + std::to_string(rho) +
                         " >= 1");
  }
  auto doubling = [&](const Eigen::MatrixXd& rhs) {
    Eigen::MatrixXd X = rhs;
    Eigen::MatrixXd Ak = A;
    for (int it = 0; it < 64; ++it) {
      const Eigen::MatrixXd step = Ak.transpose() * X * Ak;
      X += step;
      Ak = Ak * Ak;
      if (step.norm() <= 1e-17 * X.norm() || Ak.norm() == 0.0) break;
    }
    return Eigen::MatrixXd(0.5 * (X + X.transpose()));
  };

  Eigen::MatrixXd X = doubling(Q);
  // A few rounds of refinement on the residual recover digits lost to
  // cancellation when rho(A) is close to one.
  for (int refine = 0; refine < 4; ++refine) {
    const Eigen::MatrixXd E = A.transpose() * X * A - X + Q;
    if (E.norm() <= tol) break;
    X += doubling(E);
  }
  return X;
}

Eigen::MatrixXd compute_Mq(const Eigen::MatrixXd& Acl) {
  return solve_discrete_lyapunov(Acl, Eigen::MatrixXd::Identity(Acl.rows(), Acl.cols()));
}

double Certificate::saturation_level() const { return rho_star / std::sqrt(3.0); }

bool Certificate::valid() const {
  auto get = [&](const char* key) {
    auto it = residuals.find(key);
    return it == residuals.end() ? std::nan("") : it->second;
  };
  return get("lmi_mc") <= kMcTolerance && get("kappa_margin") < 0.0 &&
         get("lyapunov_mq") <= kMqTolerance && get("lu_margin") > 1.0 &&
         get("theta_margin") >= 0.0;
}

Certificate build_certificate(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd,
                              const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                              double rho_star) {
  if (!(rho_star > 0.0)) throw InvalidArgument("build_certificate: rho_star must be positive");

  Certificate c;
  c.rho_star = rho_star;
  c.Mc = compute_Mc(Ad);
  SmallGain sg = compute_small_gain(Ad, Bd, c.Mc);
  c.kappa = sg.kappa;
  c.K = std::move(sg.K);
  const Eigen::MatrixXd Acl = Ad + Bd * c.K;
  c.Mq = compute_Mq(Acl);

  c.Lu = kLuMargin * std::sqrt(3.0) / rho_star;
  const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(Ad.transpose() * c.Mq * Bd)
                           .singularValues()(0);
  c.lambda = 2.0 * c.kappa * c.Lu * sigma / std::sqrt(min_eigenvalue(c.Mc));

  const Eigen::MatrixXd G = Ad.transpose() * c.Mc * Bd;
  const Eigen::MatrixXd theta_mat = Q + c.kappa * c.kappa * G * R * G.transpose();
  c.theta = max_eigenvalue(theta_mat);

  const Eigen::Index n = Ad.rows();
  const Eigen::Index m = Bd.cols();
  c.residuals["lmi_mc"] = max_eigenvalue(Ad.transpose() * c.Mc * Ad - c.Mc);
  c.residuals["kappa_margin"] =
      max_eigenvalue(c.kappa * Bd.transpose() * c.Mc * Bd - Eigen::MatrixXd::Identity(m, m));
  c.residuals["lyapunov_mq"] =
      (Acl.transpose() * c.Mq * Acl - c.Mq + Eigen::MatrixXd::Identity(n, n)).norm();
  c.residuals["lu_margin"] = c.Lu * rho_star / std::sqrt(3.0);
  c.residuals["theta_margin"] = c.theta - max_eigenvalue(theta_mat);
  c.residuals["mc_min_eigenvalue"] = min_eigenvalue(c.Mc);
  c.residuals["closed_loop_spectral_radius"] = spectral_radius(Acl);

  if (!c.valid()) {
    throw Error("certificate residuals out of tolerance: lmi_mc=" +
                std::to_string(c.residuals["lmi_mc"]) +
                " lyapunov_mq=" + std::to_string(c.residuals["lyapunov_mq"]));
  }
  return c;
}

double lyapunov_value(const Certificate& cert, const Eigen::VectorXd& x) {
  const double qc = std::max(0.0, x.dot(cert.Mc * x));
  return x.dot(cert.Mq * x) + cert.lambda * qc * std::sqrt(qc);
}

Eigen::VectorXd saturate(const Eigen::VectorXd& u, double u_max) {
  return u.cwiseMax(-u_max).cwiseMin(u_max);
}

double lyapunov_decrease_check(const Certificate& cert, const Eigen::MatrixXd& Ad,
                               const Eigen::MatrixXd& Bd, const Eigen::VectorXd& x,
                               double u_max) {
  const Eigen::VectorXd next = Ad * x + Bd * saturate(cert.K * x, u_max);
  return lyapunov_value(cert, next) - lyapunov_value(cert, x) + x.squaredNorm();
}

nlohmann::json Certificate::to_json() const {
  nlohmann::json j;
  j["Mc"] = matrix_to_json(Mc);
  j["Mq"] = matrix_to_json(Mq);
  j["K"] = matrix_to_json(K);
  j["kappa"] = kappa;
  j["lambda"] = lambda;
  j["theta"] = theta;
  j["Lu"] = Lu;
  j["rho_star"] = rho_star;
  j["residuals"] = residuals;
  return j;
}

Certificate Certificate::from_json(const nlohmann::json& j) {
  Certificate c;
  c.Mc = matrix_from_json(j.at("Mc"));
  c.Mq = matrix_from_json(j.at("Mq"));
  c.K = matrix_from_json(j.at("K"));
  c.kappa = j.at("kappa").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.theta = j.at("theta").get<double>();
  c.Lu = j.at("Lu").get<double>();
  c.rho_star = j.at("rho_star").get<double>();
  c.residuals = j.at("residuals").get<std::map<std::string, double>>();
  return c;
}

}  // namespace quadmpc
