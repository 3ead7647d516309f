#pragma once

// Galerkin reduced model of the time stepping scheme. mu is eliminated at
// the full level (M mu = sigma eps K phi + sigma/eps M_L (phi^3 - phi_old)),
// so with phi = V a and test space V the reduced step reads
//
//   (a+ - a)/dt + C_r(u) a+ + b sigma eps K2 a+ + b sigma/eps (N(a+) - L a) = 0
//
// with W = M^{-1} K V, K2 = (K V)^T W, L = W^T M_L V and N(a) = W^T M_L (V a)^3
// (exact or DEIM-sampled). If the full trajectory lies in span(V) it solves
// the reduced equations exactly.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "chopt/adjoint_solver.hpp"
#include "chopt/deim.hpp"
#include "chopt/optimizer.hpp"
#include "chopt/pod.hpp"
#include "chopt/state_solver.hpp"

namespace chopt {

enum class NonlinearTreatment { exact, deim };

struct DEIMData {
  Eigen::MatrixXd U;
  std::vector<int> indices;
};

/// DEIM basis from the cubes of the snapshots (the part of F' treated
/// implicitly; the linear part is reduced exactly).
inline DEIMData build_deim(const CommonSpace& cs, int ell_d, bool truncate = false) {
  const Eigen::MatrixXd F = cs.Y.array().cube().matrix();
  DEIMData d;
  d.U = nonlinear_basis(F, ell_d, truncate);
  d.indices = deim_select(d.U);
  return d;
}

/// All states of a trajectory as snapshots with trapezoid weights.
inline SnapshotSet trajectory_snapshots(const Trajectory& t, double dt, std::string label = "phi") {
  SnapshotSet s{t.phi, trapezoid_weights(t.steps() + 1, dt), std::move(label)};
  return s;
}

struct ROMOperators {
  MeshPtr mesh;
  Eigen::MatrixXd V;  // only for lifting; never used online
  Eigen::MatrixXd K2;
  Eigen::MatrixXd L;
  std::vector<Eigen::MatrixXd> C;
  SampledNonlinearity cubic;
  Eigen::VectorXd a0;
  std::vector<Eigen::VectorXd> d;     // V^T M phi_d(t_k)
  std::vector<double> d_rest;         // ||phi_d(t_k) - V d_k||_M^2
  Eigen::VectorXd dT;
  double dT_rest = 0.0;
  CHParams params;
  CostWeights weights;

  int ell() const { return static_cast<int>(K2.rows()); }
};

namespace detail {

inline double residual_norm2(const Vec& y, const Eigen::MatrixXd& V, const SpMat& M, const Eigen::VectorXd& coeff) {
  const Vec r = y - V * coeff;
  return r.dot(M * r);
}

inline Vec on_mesh(const FEField& f, const MeshPtr& mesh) {
  return f.mesh_id() == mesh->id() ? f.coeffs() : Vec(interpolation_matrix(*f.mesh(), *mesh) * f.coeffs());
}

}  // namespace detail

inline ROMOperators build_rom(const PODBasis& basis, const ControlShapes& shapes, const FEField& phi0,
                              const TrackingTarget& target, const CHParams& params, const CostWeights& weights,
                              NonlinearTreatment mode = NonlinearTreatment::exact, const DEIMData* deim = nullptr) {
  params.validate();
  weights.validate();
  if (static_cast<int>(target.desired.size()) != params.time_points()) {
    throw SolverError("build_rom: desired trajectory must have N_t + 1 fields");
  }
  if (mode == NonlinearTreatment::deim && !deim) throw DEIMError("build_rom: DEIM data required");
  const MeshOperators ops(basis.mesh, shapes);
  const SpMat& M = ops.space.mass;
  const Eigen::MatrixXd& V = basis.modes;

  ROMOperators r;
  r.mesh = basis.mesh;
  r.V = V;
  r.params = params;
  r.weights = weights;
  const Eigen::MatrixXd KV = ops.space.stiffness * V;
  Eigen::SimplicialLDLT<SpMat> mass_solver(M);
  if (mass_solver.info() != Eigen::Success) throw SolverError("build_rom: mass matrix factorization failed");
  const Eigen::MatrixXd W = mass_solver.solve(KV);
  r.K2 = KV.transpose() * W;
  r.K2 = 0.5 * (r.K2 + r.K2.transpose()).eval();
  const Eigen::MatrixXd MlW = ops.space.lumped.asDiagonal() * W;
  r.L = MlW.transpose() * V;
  for (const SpMat& Ci : ops.convection) {
    Eigen::MatrixXd Cr = V.transpose() * (Ci * V);
    r.C.push_back(0.5 * (Cr - Cr.transpose()));
  }
  if (mode == NonlinearTreatment::deim) {
    if (deim->U.rows() != V.rows()) throw DEIMError("build_rom: DEIM basis on a different mesh");
    r.cubic = make_deim(MlW, V, deim->U, deim->indices);
  } else {
    r.cubic = make_exact(MlW, V);
  }

  const Eigen::MatrixXd MV = M * V;
  const Vec y0 = detail::on_mesh(phi0, r.mesh);
  r.a0 = MV.transpose() * y0;
  for (const FEField& f : target.desired) {
    const Vec y = detail::on_mesh(f, r.mesh);
    r.d.push_back(MV.transpose() * y);
    r.d_rest.push_back(detail::residual_norm2(y, V, M, r.d.back()));
  }
  const Vec yT = detail::on_mesh(target.terminal, r.mesh);
  r.dT = MV.transpose() * yT;
  r.dT_rest = detail::residual_norm2(yT, V, M, r.dT);
  return r;
}

struct ROMTrajectory {
  std::vector<Eigen::VectorXd> a;
  std::vector<int> newton_iterations;
};

namespace detail {

inline Eigen::MatrixXd rom_transport(const ROMOperators& r, const ControlVector& u, int k) {
  Eigen::MatrixXd Cu = Eigen::MatrixXd::Zero(r.ell(), r.ell());
  for (std::size_t i = 0; i < r.C.size(); ++i) Cu += u(static_cast<int>(i), k) * r.C[i];
  return Cu;
}

/// Step Jacobian d G / d a+ at a+.
inline Eigen::MatrixXd rom_jacobian(const ROMOperators& r, const Eigen::MatrixXd& lin, const Eigen::VectorXd& a) {
  const double c = r.params.mobility * r.params.sigma / r.params.epsilon;
  return lin + c * deim_jacobian(a, r.cubic, [](double s) { return 3.0 * s * s; });
}

}  // namespace detail

inline ROMTrajectory rom_solve(const ControlVector& u, const ROMOperators& r, const NewtonOptions& opt = {}) {
  const CHParams& p = r.params;
  const int N = p.steps();
  if (u.time_points() != N + 1 || u.components() != static_cast<int>(r.C.size())) {
    throw ControlError("rom_solve: control shape mismatch");
  }
  const int l = r.ell();
  const double b = p.mobility;
  const double c = b * p.sigma / p.epsilon;
  const Eigen::MatrixXd base =
      Eigen::MatrixXd::Identity(l, l) / p.dt + b * p.sigma * p.epsilon * r.K2;
  ROMTrajectory t;
  t.a.reserve(static_cast<std::size_t>(N) + 1);
  t.a.push_back(r.a0);
  for (int k = 1; k <= N; ++k) {
    const Eigen::VectorXd& prev = t.a.back();
    const Eigen::MatrixXd lin = base + detail::rom_transport(r, u, k);
    const Eigen::VectorXd explicit_part = prev / p.dt + c * (r.L * prev);
    Eigen::VectorXd a = prev;
    // relative to the size of the step data: the residual carries 1/dt scaling
    const double scale = explicit_part.norm();
    double r0 = -1.0;
    int it = 0;
    for (;; ++it) {
      const Eigen::VectorXd G = lin * a + c * deim_apply(a, r.cubic, [](double s) { return s * s * s; }) - explicit_part;
      const double norm = G.norm();
      if (!std::isfinite(norm)) throw SolverError("rom_solve: residual is not finite");
      if (r0 < 0.0) r0 = norm;
      if (norm < opt.abs_tol || norm < opt.rel_tol * std::max(r0, scale)) break;
      if (it >= opt.max_iter) throw SolverError("rom_solve: Newton did not converge at step " + std::to_string(k));
      a -= detail::rom_jacobian(r, lin, a).partialPivLu().solve(G);
    }
    t.newton_iterations.push_back(it);
    t.a.push_back(std::move(a));
  }
  return t;
}

inline CostBreakdown rom_cost(const ROMTrajectory& t, const ControlVector& u, const ROMOperators& r) {
  const int N = r.params.steps();
  const Vec tw = trapezoid_weights(N + 1, r.params.dt);
  CostBreakdown c;
  for (int k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    c.tracking += 0.5 * r.weights.beta1 * tw[k] * ((t.a[ks] - r.d[ks]).squaredNorm() + r.d_rest[ks]);
  }
  c.terminal = 0.5 * r.weights.beta2 * ((t.a.back() - r.dT).squaredNorm() + r.dT_rest);
  c.control = 0.5 * r.weights.gamma * control_inner(u, u, tw);
  return c;
}

/// Reduced adjoint (exact transpose of the reduced scheme) and gradient.
inline ControlVector rom_gradient(const ControlVector& u, const ROMTrajectory& t, const ROMOperators& r) {
  const CHParams& p = r.params;
  const int N = p.steps();
  const int l = r.ell();
  const double b = p.mobility;
  const double c = b * p.sigma / p.epsilon;
  const Vec tw = trapezoid_weights(N + 1, p.dt);
  const Eigen::MatrixXd base = Eigen::MatrixXd::Identity(l, l) / p.dt + b * p.sigma * p.epsilon * r.K2;
  const Eigen::MatrixXd coupling = Eigen::MatrixXd::Identity(l, l) / p.dt + c * r.L;  // -dG_{k+1}/da_k
  ControlVector g(Eigen::MatrixXd(r.weights.gamma * u.values()));
  Eigen::VectorXd next = Eigen::VectorXd::Zero(l);
  for (int k = N; k >= 1; --k) {
    const auto ks = static_cast<std::size_t>(k);
    Eigen::VectorXd rhs = -r.weights.beta1 * tw[k] * (t.a[ks] - r.d[ks]) + coupling.transpose() * next;
    if (k == N) rhs -= r.weights.beta2 * (t.a[ks] - r.dT);
    const Eigen::MatrixXd A = detail::rom_jacobian(r, base + detail::rom_transport(r, u, k), t.a[ks]);
    const Eigen::VectorXd lam = A.transpose().partialPivLu().solve(rhs);
    for (int i = 0; i < u.components(); ++i) {
      g(i, k) += lam.dot(r.C[static_cast<std::size_t>(i)] * t.a[ks]) / tw[k];
    }
    next = lam;
  }
  return g;
}

/// The reduced model as an optimizer model; caches the last trajectory.
class ReducedOrderModel {
 public:
  explicit ReducedOrderModel(ROMOperators ops, NewtonOptions newton = {}) : ops_(std::move(ops)), newton_(newton) {}

  double evaluate_cost(const ControlVector& u) { return cost_breakdown(u).total(); }
  CostBreakdown cost_breakdown(const ControlVector& u) {
    ensure(u);
    return last_->cost;
  }
  ControlVector evaluate_gradient(const ControlVector& u) {
    ensure(u);
    return rom_gradient(u, last_->traj, ops_);
  }
  Eigen::VectorXd time_weights() const { return trapezoid_weights(ops_.params.time_points(), ops_.params.dt); }

  const ROMTrajectory& trajectory(const ControlVector& u) {
    ensure(u);
    return last_->traj;
  }
  /// V a_k on the reference mesh.
  FEField lift(const Eigen::VectorXd& a) const { return FEField(ops_.mesh, ops_.V * a); }
  const ROMOperators& operators() const { return ops_; }

 private:
  struct Evaluated {
    ControlVector u;
    ROMTrajectory traj;
    CostBreakdown cost;
  };
  void ensure(const ControlVector& u) {
    if (last_ && last_->u == u) return;
    last_.reset();
    ROMTrajectory t = rom_solve(u, ops_, newton_);
    const CostBreakdown c = rom_cost(t, u, ops_);
    last_.emplace(Evaluated{u, std::move(t), c});
  }

  ROMOperators ops_;
  NewtonOptions newton_;
  std::optional<Evaluated> last_;
};

static_assert(ReducedCostModel<ReducedOrderModel>);

/// Relative L2(0,T;L2) distance between a full trajectory and a lifted ROM
/// trajectory.
inline double trajectory_error(const Trajectory& full, const ROMTrajectory& rom, const ROMOperators& r,
                               MeshPairDistance& dist) {
  const int N = full.steps();
  if (static_cast<int>(rom.a.size()) != N + 1) throw SolverError("trajectory_error: length mismatch");
  const Vec tw = trapezoid_weights(N + 1, r.params.dt);
  double num = 0.0, den = 0.0;
  for (int k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const FEField lifted(r.mesh, r.V * rom.a[ks]);
    num += tw[k] * dist(full.phi[ks], lifted);
    den += tw[k] * full.phi[ks].coeffs().dot(dist.mass(full.mesh(k)) * full.phi[ks].coeffs());
  }
  return std::sqrt(num / den);
}

/// Same measure between two full trajectories.
inline double trajectory_error(const Trajectory& a, const Trajectory& ref, double dt, MeshPairDistance& dist) {
  const int N = ref.steps();
  if (a.steps() != N) throw SolverError("trajectory_error: length mismatch");
  const Vec tw = trapezoid_weights(N + 1, dt);
  double num = 0.0, den = 0.0;
  for (int k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    num += tw[k] * dist(a.phi[ks], ref.phi[ks]);
    den += tw[k] * ref.phi[ks].coeffs().dot(dist.mass(ref.mesh(k)) * ref.phi[ks].coeffs());
  }
  return std::sqrt(num / den);
}

}  // namespace chopt
