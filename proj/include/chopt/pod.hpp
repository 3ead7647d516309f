#pragma once

// POD in the L2 inner product for snapshots living on different adapted
// meshes: prolongate everything to the common refinement, then use the
// method of snapshots on the weighted Gram matrix.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "chopt/fem.hpp"
#include "chopt/log.hpp"
#include "chopt/mesh.hpp"

namespace chopt {

class PODError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SnapshotSet {
  std::vector<FEField> fields;
  Eigen::VectorXd weights;
  std::string label;

  void validate() const {
    if (fields.size() < 2) throw PODError("SnapshotSet: need at least 2 snapshots");
    if (weights.size() != static_cast<Eigen::Index>(fields.size())) throw PODError("SnapshotSet: weight count mismatch");
    if ((weights.array() <= 0.0).any()) throw PODError("SnapshotSet: weights must be positive");
  }
};

/// Snapshots prolongated onto one reference mesh (columns of Y).
struct CommonSpace {
  MeshPtr mesh;
  Eigen::MatrixXd Y;
  SpMat mass;
};

/// Common refinement of all distinct snapshot meshes.
inline MeshPtr common_mesh(const std::vector<FEField>& fields) {
  std::vector<MeshPtr> meshes;
  std::set<std::uint64_t> seen;
  for (const FEField& f : fields) {
    if (seen.insert(f.mesh_id()).second) meshes.push_back(f.mesh());
  }
  return common_refinement(std::span<const MeshPtr>(meshes));
}

inline CommonSpace build_common_space(const SnapshotSet& snaps) {
  snaps.validate();
  CommonSpace cs;
  cs.mesh = common_mesh(snaps.fields);
  cs.mass = assemble_mass(*cs.mesh);
  const auto n = static_cast<Eigen::Index>(cs.mesh->num_vertices());
  cs.Y.resize(n, static_cast<Eigen::Index>(snaps.fields.size()));
  std::map<std::uint64_t, SpMat> transfer;
  for (std::size_t j = 0; j < snaps.fields.size(); ++j) {
    const FEField& f = snaps.fields[j];
    if (f.mesh_id() == cs.mesh->id()) {
      cs.Y.col(static_cast<Eigen::Index>(j)) = f.coeffs();
      continue;
    }
    auto it = transfer.find(f.mesh_id());
    if (it == transfer.end()) it = transfer.emplace(f.mesh_id(), interpolation_matrix(*f.mesh(), *cs.mesh)).first;
    cs.Y.col(static_cast<Eigen::Index>(j)) = it->second * f.coeffs();
  }
  return cs;
}

struct PODBasis {
  MeshPtr mesh;
  Eigen::MatrixXd modes;        // n x ell, M-orthonormal columns
  Eigen::VectorXd eigenvalues;  // all Gram eigenvalues, non-increasing, clamped at 0
  int rank = 0;                 // count with lambda_i >= 1e-14 lambda_1

  int size() const { return static_cast<int>(modes.cols()); }
  double tail(int ell) const { return eigenvalues.tail(eigenvalues.size() - ell).sum(); }
  double total() const { return eigenvalues.sum(); }
};

namespace detail {

/// Modified Gram-Schmidt in the M inner product, applied twice.
inline void m_orthonormalize(Eigen::MatrixXd& V, const SpMat& M) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index i = 0; i < V.cols(); ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        const Eigen::VectorXd Mvj = M * V.col(j);
        V.col(i) -= V.col(i).dot(Mvj) * V.col(j);
      }
      V.col(i) /= std::sqrt(V.col(i).dot(M * V.col(i)));
    }
  }
}

/// Deterministic sign: the largest-magnitude coefficient is positive.
inline void fix_signs(Eigen::MatrixXd& V) {
  for (Eigen::Index i = 0; i < V.cols(); ++i) {
    Eigen::Index arg = 0;
    V.col(i).cwiseAbs().maxCoeff(&arg);
    if (V(arg, i) < 0.0) V.col(i) *= -1.0;
  }
}

}  // namespace detail

inline constexpr int kFullRank = -1;

/// Method of snapshots: G_jk = sqrt(w_j w_k) y_j^T M y_k,
/// psi_i = sum_j sqrt(w_j) (e_i)_j y_j / sqrt(lambda_i).
/// With truncate set, ell above the numerical rank is reduced to the rank
/// with a warning instead of throwing.
inline PODBasis compute_basis(const CommonSpace& cs, const Eigen::VectorXd& weights, int ell, bool truncate = false) {
  const Eigen::Index s = cs.Y.cols();
  if (weights.size() != s) throw PODError("compute_basis: weight count mismatch");
  if (ell < kFullRank || ell > s) throw PODError("compute_basis: ell exceeds the number of snapshots");
  const Eigen::VectorXd sw = weights.cwiseSqrt();
  const Eigen::MatrixXd Yw = cs.Y * sw.asDiagonal();
  Eigen::MatrixXd G = Yw.transpose() * (cs.mass * Yw);
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  if (eig.info() != Eigen::Success) throw PODError("compute_basis: eigensolver failed");
  PODBasis b;
  b.mesh = cs.mesh;
  b.eigenvalues = eig.eigenvalues().reverse();
  const Eigen::MatrixXd E = eig.eigenvectors().rowwise().reverse();
  for (Eigen::Index i = 0; i < s; ++i) {
    if (b.eigenvalues[i] < -1e-12 * std::max(1.0, b.eigenvalues[0])) {
      log_warn("compute_basis: clamping negative Gram eigenvalue " + std::to_string(b.eigenvalues[i]));
    }
    b.eigenvalues[i] = std::max(b.eigenvalues[i], 0.0);
  }
  const double cutoff = 1e-14 * b.eigenvalues[0];
  b.rank = 0;
  while (b.rank < s && b.eigenvalues[b.rank] >= cutoff && b.eigenvalues[b.rank] > 0.0) ++b.rank;
  if (ell == kFullRank) ell = b.rank;
  if (ell > b.rank && truncate) {
    log_warn("compute_basis: ell = " + std::to_string(ell) + " truncated to the numerical rank " + std::to_string(b.rank));
    ell = b.rank;
  }
  if (ell > b.rank) throw PODError("compute_basis: ell = " + std::to_string(ell) + " exceeds the numerical rank " + std::to_string(b.rank));
  b.modes = Yw * E.leftCols(ell);
  for (int i = 0; i < ell; ++i) b.modes.col(i) /= std::sqrt(b.eigenvalues[i]);
  detail::m_orthonormalize(b.modes, cs.mass);
  detail::fix_signs(b.modes);
  return b;
}

inline PODBasis compute_basis(const SnapshotSet& snaps, int ell) {
  return compute_basis(build_common_space(snaps), snaps.weights, ell);
}

struct ProjectionError {
  double direct = 0.0;  // sum_j w_j ||y_j - P y_j||_M^2
  double tail = 0.0;    // sum_{i > ell} lambda_i
};

inline ProjectionError projection_error(const CommonSpace& cs, const Eigen::VectorXd& weights, const PODBasis& b) {
  if (b.mesh->id() != cs.mesh->id()) throw PODError("projection_error: basis and snapshots on different meshes");
  ProjectionError e;
  const Eigen::MatrixXd MV = cs.mass * b.modes;
  for (Eigen::Index j = 0; j < cs.Y.cols(); ++j) {
    const Eigen::VectorXd r = cs.Y.col(j) - b.modes * (MV.transpose() * cs.Y.col(j));
    e.direct += weights[j] * r.dot(cs.mass * r);
  }
  e.tail = b.tail(b.size());
  return e;
}

/// M-orthogonal projection coefficients V^T M f.
inline Eigen::VectorXd project(const PODBasis& b, const SpMat& mass, const FEField& f) {
  const Vec y = f.mesh_id() == b.mesh->id() ? f.coeffs() : Vec(interpolation_matrix(*f.mesh(), *b.mesh) * f.coeffs());
  return b.modes.transpose() * (mass * y);
}

inline FEField lift(const PODBasis& b, const Eigen::VectorXd& a) { return FEField(b.mesh, b.modes * a); }

}  // namespace chopt
