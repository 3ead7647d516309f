#pragma once

// Discrete empirical interpolation for componentwise nonlinearities:
//   f(V a) ~ U (P^T U)^{-1} f(P^T V a)
// so a Galerkin-tested term T^T f(V a) costs O(ell * ell_d) online.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "chopt/log.hpp"
#include "chopt/pod.hpp"

namespace chopt {

class DEIMError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Leading ell_d left singular vectors of the snapshot matrix F (Euclidean),
/// via the eigen-decomposition of F^T F.
inline Eigen::MatrixXd nonlinear_basis(const Eigen::MatrixXd& F, int ell_d, bool truncate = false) {
  if (truncate && ell_d > F.cols()) ell_d = static_cast<int>(F.cols());
  if (ell_d < 1 || ell_d > F.cols()) throw DEIMError("nonlinear_basis: ell_d must be in [1, snapshot count]");
  Eigen::MatrixXd G = F.transpose() * F;
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  if (eig.info() != Eigen::Success) throw DEIMError("nonlinear_basis: eigensolver failed");
  const Eigen::VectorXd lam = eig.eigenvalues().reverse();
  const Eigen::MatrixXd E = eig.eigenvectors().rowwise().reverse();
  if (truncate) {
    int rank = 0;
    while (rank < ell_d && lam[rank] > 1e-14 * lam[0]) ++rank;
    if (rank < ell_d) {
      log_warn("nonlinear_basis: ell_d = " + std::to_string(ell_d) + " truncated to the numerical rank " + std::to_string(rank));
      ell_d = std::max(rank, 1);
    }
  }
  if (!(lam[ell_d - 1] > 1e-14 * lam[0])) {
    throw DEIMError("nonlinear_basis: nonlinearity snapshots have rank below ell_d = " + std::to_string(ell_d));
  }
  Eigen::MatrixXd U = F * E.leftCols(ell_d);
  // orthonormalize (twice for accuracy on the weaker modes)
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(U);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(U.rows(), U.cols());
    const Eigen::VectorXd d = qr.matrixQR().diagonal().topRows(U.cols());
    U = Q * d.cwiseSign().asDiagonal();
  }
  detail::fix_signs(U);
  return U;
}

/// Greedy DEIM index selection.
inline std::vector<int> deim_select(const Eigen::MatrixXd& U) {
  const Eigen::Index m = U.cols();
  if (m < 1 || m > U.rows()) throw DEIMError("deim_select: basis must have 1..n columns");
  std::vector<int> P;
  P.reserve(static_cast<std::size_t>(m));
  Eigen::Index arg = 0;
  U.col(0).cwiseAbs().maxCoeff(&arg);
  P.push_back(static_cast<int>(arg));
  for (Eigen::Index l = 1; l < m; ++l) {
    Eigen::MatrixXd PU(l, l);
    Eigen::VectorXd Pu(l);
    for (Eigen::Index i = 0; i < l; ++i) {
      PU.row(i) = U.row(P[static_cast<std::size_t>(i)]).leftCols(l);
      Pu[i] = U(P[static_cast<std::size_t>(i)], l);
    }
    const Eigen::VectorXd c = PU.partialPivLu().solve(Pu);
    const Eigen::VectorXd r = U.col(l) - U.leftCols(l) * c;
    const double rmax = r.cwiseAbs().maxCoeff(&arg);
    if (!(rmax > 1e-12 * U.col(l).cwiseAbs().maxCoeff())) {
      throw DEIMError("deim_select: residual vanished at step " + std::to_string(l) + " (rank deficient basis)");
    }
    P.push_back(static_cast<int>(arg));
  }
  return P;
}

/// Online form of a DEIM-approximated Galerkin term
///   T^T f(V a) ~ E f(S a),  E = T^T U (P^T U)^{-1},  S = P^T V.
/// With E = T^T and S = V (no sampling) the same evaluation is exact.
struct SampledNonlinearity {
  Eigen::MatrixXd E;  // ell_out x ell_d
  Eigen::MatrixXd S;  // ell_d x ell
  std::vector<int> indices;  // empty when not sampled

  Eigen::Index samples() const { return S.rows(); }
};

inline SampledNonlinearity make_deim(const Eigen::MatrixXd& test, const Eigen::MatrixXd& trial, const Eigen::MatrixXd& U,
                                     const std::vector<int>& P) {
  if (test.rows() != U.rows() || trial.rows() != U.rows()) throw DEIMError("make_deim: dimension mismatch");
  if (static_cast<Eigen::Index>(P.size()) != U.cols()) throw DEIMError("make_deim: index count mismatch");
  const auto l = static_cast<Eigen::Index>(P.size());
  Eigen::MatrixXd PU(l, U.cols()), S(l, trial.cols());
  for (Eigen::Index i = 0; i < l; ++i) {
    PU.row(i) = U.row(P[static_cast<std::size_t>(i)]);
    S.row(i) = trial.row(P[static_cast<std::size_t>(i)]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(PU);
  if (!lu.isInvertible()) throw DEIMError("make_deim: P^T U is singular");
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(PU);
  const double cond = svd.singularValues()(0) / svd.singularValues()(l - 1);
  log_info("DEIM: ell_d = " + std::to_string(l) + ", cond(P^T U) = " + std::to_string(cond));
  // E = T^T U (P^T U)^{-1}  <=>  E^T = (P^T U)^{-T} U^T T
  const Eigen::MatrixXd Et = lu.transpose().solve(Eigen::MatrixXd(U.transpose() * test));
  return {Et.transpose(), S, P};
}

inline SampledNonlinearity make_exact(const Eigen::MatrixXd& test, const Eigen::MatrixXd& trial) {
  if (test.rows() != trial.rows()) throw DEIMError("make_exact: dimension mismatch");
  return {test.transpose(), trial, {}};
}

/// E f(S a) for a componentwise functor f.
template <class F>
Eigen::VectorXd deim_apply(const Eigen::VectorXd& a, const SampledNonlinearity& d, F&& f) {
  Eigen::VectorXd z = d.S * a;
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = f(z[i]);
  return d.E * z;
}

/// Jacobian E diag(f'(S a)) S.
template <class F>
Eigen::MatrixXd deim_jacobian(const Eigen::VectorXd& a, const SampledNonlinearity& d, F&& df) {
  Eigen::VectorXd z = d.S * a;
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = df(z[i]);
  return d.E * (z.asDiagonal() * d.S);
}

}  // namespace chopt
