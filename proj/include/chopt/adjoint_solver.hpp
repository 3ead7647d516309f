#pragma once

// Tracking cost of a trajectory and the discrete adjoint of the time
// stepping scheme (exact transpose of its linearization, including the
// transfers at remeshing steps), plus the reduced gradient.

#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "chopt/control.hpp"
#include "chopt/mesh.hpp"
#include "chopt/state_solver.hpp"

namespace chopt {

struct CostWeights {
  double beta1 = 20.0;
  double beta2 = 20.0;
  double gamma = 1e-4;

  void validate() const {
    if (!(beta1 >= 0 && beta2 >= 0 && gamma > 0)) throw ControlError("CostWeights: need beta1, beta2 >= 0, gamma > 0");
  }
};

struct CostBreakdown {
  double tracking = 0.0;  // beta1/2 int ||phi - phi_d||^2
  double terminal = 0.0;  // beta2/2 ||phi(T) - phi_T||^2
  double control = 0.0;   // gamma/2 ||u||^2
  double total() const { return tracking + terminal + control; }
};

/// L2 distance between P1 functions on two meshes of one hierarchy,
/// evaluated exactly on their common refinement. Pair operators are cached.
class MeshPairDistance {
 public:
  /// Returns ||a - b||^2_{L2} and, if requested, its gradient w.r.t. a's
  /// coefficients.
  double operator()(const FEField& a, const FEField& b, Vec* grad_a = nullptr) {
    if (a.mesh_id() == b.mesh_id()) {
      const SpMat& M = mass(a.mesh());
      const Vec d = a.coeffs() - b.coeffs();
      const Vec Md = M * d;
      if (grad_a) *grad_a = 2.0 * Md;
      return d.dot(Md);
    }
    const Pair& p = pair(a.mesh(), b.mesh());
    const Vec d = p.Pa * a.coeffs() - p.Pb * b.coeffs();
    const Vec Md = p.M * d;
    if (grad_a) *grad_a = 2.0 * (p.Pa.transpose() * Md);
    return d.dot(Md);
  }

  const SpMat& mass(const MeshPtr& m) {
    auto& slot = masses_[m->id()];
    if (!slot) slot = std::make_shared<SpMat>(assemble_mass(*m));
    return *slot;
  }

 private:
  struct Pair {
    SpMat Pa, Pb, M;
  };

  const Pair& pair(const MeshPtr& a, const MeshPtr& b) {
    auto& slot = pairs_[{a->id(), b->id()}];
    if (!slot) {
      const MeshPtr c = common_refinement(a, b);
      slot = std::make_shared<Pair>(Pair{interpolation_matrix(*a, *c), interpolation_matrix(*b, *c), SpMat{}});
      slot->M = c->id() == a->id() ? mass(a) : c->id() == b->id() ? mass(b) : assemble_mass(*c);
    }
    return *slot;
  }

  std::map<std::uint64_t, std::shared_ptr<SpMat>> masses_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::shared_ptr<Pair>> pairs_;
};

/// Desired states: phi_d at every time level (on its own meshes) and phi_T.
struct TrackingTarget {
  std::vector<FEField> desired;
  FEField terminal;

  static TrackingTarget from_trajectory(const Trajectory& t) { return {t.phi, t.phi.back()}; }
};

/// Cost of a computed trajectory; optionally the derivatives w.r.t. each
/// phi_k (d_phi[k] lives on the mesh of phi_k).
inline CostBreakdown evaluate_cost(const Trajectory& traj, const ControlVector& u, const TrackingTarget& target,
                                   const CostWeights& w, const CHParams& p, MeshPairDistance& dist,
                                   std::vector<Vec>* d_phi = nullptr) {
  const int N = traj.steps();
  if (static_cast<int>(target.desired.size()) != N + 1) throw SolverError("evaluate_cost: target/trajectory length mismatch");
  const Vec tw = trapezoid_weights(N + 1, p.dt);
  CostBreakdown c;
  if (d_phi) d_phi->assign(static_cast<std::size_t>(N) + 1, Vec());
  for (int k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    Vec g;
    if (w.beta1 > 0.0) {
      c.tracking += 0.5 * w.beta1 * tw[k] * dist(traj.phi[ks], target.desired[ks], d_phi ? &g : nullptr);
      if (d_phi) (*d_phi)[ks] = 0.5 * w.beta1 * tw[k] * g;
    } else if (d_phi) {
      (*d_phi)[ks] = Vec::Zero(traj.phi[ks].size());
    }
  }
  if (w.beta2 > 0.0) {
    Vec g;
    c.terminal = 0.5 * w.beta2 * dist(traj.phi.back(), target.terminal, d_phi ? &g : nullptr);
    if (d_phi) d_phi->back() += 0.5 * w.beta2 * g;
  }
  c.control = 0.5 * w.gamma * control_inner(u, u, tw);
  return c;
}

/// Multipliers of the step equations: (p_k, q_k) pair with the phi- and
/// mu-rows of step k (k = 1..N) on mesh k. p[0] holds minus the sensitivity
/// of the cost to phi_0 and q[0] is zero.
struct AdjointTrajectory {
  std::vector<Vec> p;
  std::vector<Vec> q;
};

/// Backward sweep: A_k^T lambda_k = -dJ/dx_k + T_k^T (M p/dt + sigma/eps m_L q)_{k+1}.
inline AdjointTrajectory solve_adjoint(const Trajectory& traj, const ControlVector& u,
                                       const std::vector<Vec>& d_phi, const CHParams& p) {
  const int N = traj.steps();
  if (static_cast<int>(d_phi.size()) != N + 1 || static_cast<int>(traj.transfer.size()) != N) {
    throw SolverError("solve_adjoint: trajectory bookkeeping mismatch");
  }
  AdjointTrajectory adj;
  adj.p.assign(static_cast<std::size_t>(N) + 1, Vec());
  adj.q.assign(static_cast<std::size_t>(N) + 1, Vec());
  StepSolver solver;
  Vec carry;  // coupling from step k+1, already on mesh k+1
  const double s_e = p.sigma / p.epsilon;
  for (int k = N; k >= 0; --k) {
    const auto ks = static_cast<std::size_t>(k);
    const MeshOperators& ops = *traj.ops[ks];
    const Eigen::Index n = ops.size();
    if (d_phi[ks].size() != n) throw SolverError("solve_adjoint: cost derivative on the wrong mesh");
    Vec rhs_phi = -d_phi[ks];
    if (k < N) {
      const auto& T = traj.transfer[ks];
      rhs_phi += T ? Vec(T->transpose() * carry) : carry;
    }
    if (k == 0) {
      adj.p[0] = rhs_phi;
      adj.q[0] = Vec::Zero(n);
      break;
    }
    Vec rhs(2 * n);
    rhs.head(n) = rhs_phi;
    rhs.tail(n).setZero();
    solver.fill_jacobian(ops, ops.transport(u, k), traj.phi[ks].coeffs(), p);
    const Vec lam = solver.solve_transposed(rhs);
    adj.p[ks] = lam.head(n);
    adj.q[ks] = lam.tail(n);
    if (!lam.allFinite()) throw SolverError("solve_adjoint: non-finite multiplier");
    carry = ops.space.mass * adj.p[ks] / p.dt + s_e * ops.space.lumped.cwiseProduct(adj.q[ks]);
  }
  return adj;
}

/// U_h-Riesz representative of dJ/du:
///   g_i(t_k) = gamma u_i(t_k) + p_k^T C(chi_i) phi_k / w_k  (k >= 1).
inline ControlVector reduced_gradient(const ControlVector& u, const Trajectory& traj, const AdjointTrajectory& adj,
                                      const CHParams& p, double gamma) {
  const int N = traj.steps();
  if (u.time_points() != N + 1 || static_cast<int>(adj.p.size()) != N + 1) {
    throw ControlError("reduced_gradient: misaligned trajectory, adjoint and control");
  }
  const Vec tw = trapezoid_weights(N + 1, p.dt);
  ControlVector g(Eigen::MatrixXd(gamma * u.values()));
  for (int k = 1; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const MeshOperators& ops = *traj.ops[ks];
    if (adj.p[ks].size() != ops.size()) throw ControlError("reduced_gradient: adjoint on the wrong mesh");
    for (int i = 0; i < u.components(); ++i) {
      g(i, k) += adj.p[ks].dot(ops.convection[static_cast<std::size_t>(i)] * traj.phi[ks].coeffs()) / tw[k];
    }
  }
  return g;
}

}  // namespace chopt
