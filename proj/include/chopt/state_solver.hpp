#pragma once

// Time stepping of the controlled convective Cahn-Hilliard system
//
//   M (phi+ - phi)/dt + C(B u+) phi+ + b K mu+ = 0
//   sigma eps K phi+ + sigma/eps [N(phi+) - M_L phi] - M mu+ = 0
//
// with N(phi) = M_L phi^3 (convex part implicit, concave part explicit) and
// a Newton solve of the coupled (phi, mu) system per step.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "chopt/control.hpp"
#include "chopt/fem.hpp"
#include "chopt/log.hpp"
#include "chopt/mesh.hpp"

namespace chopt {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CHParams {
  double mobility = 2.5e-5;
  double sigma = 25.98;
  double epsilon = 0.02;
  double dt = 2.5e-5;
  double end_time = 0.0125;

  int steps() const { return static_cast<int>(std::lround(end_time / dt)); }
  int time_points() const { return steps() + 1; }

  void validate() const {
    if (!(mobility > 0 && sigma > 0 && epsilon > 0 && dt > 0 && end_time > 0)) {
      throw SolverError("CHParams: all parameters must be positive");
    }
    if (std::abs(steps() * dt - end_time) > 1e-9 * end_time) {
      throw SolverError("CHParams: end_time must be an integer multiple of dt");
    }
  }
};

struct NewtonOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-12;
  int max_iter = 30;
};

/// 2n x 2n matrix with four blocks sharing the P1 pattern, plus positions of
/// each block entry in the big matrix's value array.
struct BlockPattern {
  SpMat matrix;
  std::array<std::vector<int>, 4> pos;  // row-major block index
  std::vector<int> diag;                // value index of (i, i) in the P1 pattern

  explicit BlockPattern(const SpMat& P) {
    const int n = static_cast<int>(P.rows());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(4 * static_cast<std::size_t>(P.nonZeros()));
    for (int c = 0; c < n; ++c) {
      for (SpMat::InnerIterator it(P, c); it; ++it) {
        for (int b = 0; b < 4; ++b) trips.emplace_back((b / 2) * n + static_cast<int>(it.row()), (b % 2) * n + c, 0.0);
      }
    }
    matrix.resize(2 * n, 2 * n);
    matrix.setFromTriplets(trips.begin(), trips.end());
    matrix.makeCompressed();
    for (auto& p : pos) p.assign(static_cast<std::size_t>(P.nonZeros()), -1);
    diag.assign(static_cast<std::size_t>(n), -1);
    const int* outer = matrix.outerIndexPtr();
    const int* inner = matrix.innerIndexPtr();
    for (int c = 0; c < n; ++c) {
      for (int e = P.outerIndexPtr()[c]; e < P.outerIndexPtr()[c + 1]; ++e) {
        const int r = P.innerIndexPtr()[e];
        if (r == c) diag[static_cast<std::size_t>(c)] = e;
        for (int b = 0; b < 4; ++b) {
          const int col = (b % 2) * n + c;
          const int row = (b / 2) * n + r;
          const int* lo = inner + outer[col];
          const int* hi = inner + outer[col + 1];
          const int* at = std::lower_bound(lo, hi, row);
          pos[static_cast<std::size_t>(b)][static_cast<std::size_t>(e)] = static_cast<int>(at - inner);
        }
      }
    }
  }
};

/// Everything the state and adjoint solvers need on one mesh.
struct MeshOperators {
  FESpace space;
  std::vector<VelocityField> shapes;
  std::vector<SpMat> convection;  // C(chi_i), same pattern as the mass matrix
  std::vector<double> shape_speed;
  BlockPattern blocks;

  MeshOperators(const MeshPtr& mesh, const ControlShapes& shape_set)
      : space(mesh), shapes(shape_set.interpolate_all(mesh)), blocks(space.mass) {
    for (const auto& chi : shapes) {
      convection.push_back(assemble_convection(*mesh, chi));
      shape_speed.push_back(chi.max_speed());
      check_pattern(convection.back());
    }
    check_pattern(space.stiffness);
  }

  const MeshPtr& mesh() const { return space.mesh; }
  Eigen::Index size() const { return space.mass.rows(); }

  /// C(B u(t_k)) with the pattern of the mass matrix.
  SpMat transport(const ControlVector& u, int k) const {
    SpMat C = space.mass;
    Eigen::Map<Vec> vals(C.valuePtr(), C.nonZeros());
    vals.setZero();
    for (std::size_t i = 0; i < convection.size(); ++i) {
      vals += u(static_cast<int>(i), k) * Eigen::Map<const Vec>(convection[i].valuePtr(), convection[i].nonZeros());
    }
    return C;
  }

  /// Upper bound of the nodal speed of B u(t_k).
  double speed(const ControlVector& u, int k) const {
    if (shapes.size() == 1) return std::abs(u(0, k)) * shape_speed[0];
    return apply_B(u, k, shapes).max_speed();
  }

 private:
  void check_pattern(const SpMat& A) const {
    const SpMat& M = space.mass;
    if (A.nonZeros() != M.nonZeros() ||
        !std::equal(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros(), M.innerIndexPtr())) {
      throw SolverError("MeshOperators: operator pattern differs from the mass matrix pattern");
    }
  }
};

using OperatorsPtr = std::shared_ptr<const MeshOperators>;

/// Operators by mesh id. Entries are weak so trajectories own their meshes.
class OperatorCache {
 public:
  explicit OperatorCache(ControlShapes shapes) : shapes_(std::move(shapes)) {}

  OperatorsPtr get(const MeshPtr& mesh) {
    auto& slot = cache_[mesh->id()];
    if (auto p = slot.lock()) return p;
    auto p = std::make_shared<const MeshOperators>(mesh, shapes_);
    slot = p;
    if (cache_.size() > 256) prune();
    return p;
  }

  const ControlShapes& shapes() const { return shapes_; }

 private:
  void prune() {
    for (auto it = cache_.begin(); it != cache_.end();) {
      it = it->second.expired() ? cache_.erase(it) : std::next(it);
    }
  }

  ControlShapes shapes_;
  std::unordered_map<std::uint64_t, std::weak_ptr<const MeshOperators>> cache_;
};

/// Newton workspace; keeps the LU symbolic analysis while the mesh is unchanged.
class StepSolver {
 public:
  void fill_jacobian(const MeshOperators& ops, const SpMat& C, const Vec& phi, const CHParams& p) {
    prepare(ops);
    const SpMat& M = ops.space.mass;
    const SpMat& K = ops.space.stiffness;
    const double* m = M.valuePtr();
    const double* k = K.valuePtr();
    const double* c = C.valuePtr();
    double* J = jac_.valuePtr();
    const auto& pos = ops.blocks.pos;
    const double se = p.sigma * p.epsilon;
    for (Eigen::Index e = 0; e < M.nonZeros(); ++e) {
      J[pos[0][e]] = m[e] / p.dt + c[e];
      J[pos[1][e]] = p.mobility * k[e];
      J[pos[2][e]] = se * k[e];
      J[pos[3][e]] = -m[e];
    }
    const double s_e = p.sigma / p.epsilon;
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      J[pos[2][ops.blocks.diag[i]]] += s_e * 3.0 * ops.space.lumped[i] * phi[i] * phi[i];
    }
    lu_.factorize(jac_);
    if (lu_.info() != Eigen::Success) throw SolverError("step Jacobian factorization failed: " + lu_.lastErrorMessage());
  }

  Vec solve(const Vec& rhs) {
    Vec x = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success) throw SolverError("step linear solve failed");
    return x;
  }

  Vec solve_transposed(const Vec& rhs) {
    Vec x = lu_.transpose().solve(rhs);
    if (lu_.info() != Eigen::Success) throw SolverError("transposed step solve failed");
    return x;
  }

 private:
  void prepare(const MeshOperators& ops) {
    if (mesh_id_ && *mesh_id_ == ops.mesh()->id()) return;
    jac_ = ops.blocks.matrix;
    lu_.analyzePattern(jac_);
    mesh_id_ = ops.mesh()->id();
  }

  std::optional<std::uint64_t> mesh_id_;
  SpMat jac_;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
};

struct StepResult {
  Vec phi;
  Vec mu;
  int iterations = 0;
  std::vector<double> residuals;
};

inline Vec step_residual(const MeshOperators& ops, const SpMat& C, const Vec& phi_old, const Vec& phi,
                         const Vec& mu, const CHParams& p) {
  const SpMat& M = ops.space.mass;
  const SpMat& K = ops.space.stiffness;
  const Eigen::Index n = phi.size();
  Vec r(2 * n);
  r.head(n) = M * (phi - phi_old) / p.dt + C * phi + p.mobility * (K * mu);
  r.tail(n) = p.sigma * p.epsilon * (K * phi) +
              p.sigma / p.epsilon * (ops.space.lumped.array() * (phi.array().cube() - phi_old.array())).matrix() -
              M * mu;
  return r;
}

/// One time step on a fixed mesh; phi_old already lives on ops' mesh.
inline StepResult ch_step(const MeshOperators& ops, StepSolver& solver, const SpMat& C, const Vec& phi_old,
                          const Vec& mu_guess, const CHParams& p, const NewtonOptions& opt = {}) {
  const Eigen::Index n = phi_old.size();
  StepResult res{phi_old, mu_guess, 0, {}};
  double r0 = -1.0;
  for (int it = 0;; ++it) {
    const Vec r = step_residual(ops, C, phi_old, res.phi, res.mu, p);
    const double norm = r.norm();
    if (!std::isfinite(norm)) throw SolverError("Newton residual is not finite");
    res.residuals.push_back(norm);
    if (r0 < 0.0) r0 = norm;
    if (norm < opt.abs_tol || norm < opt.rel_tol * r0) break;
    if (it >= opt.max_iter) {
      std::ostringstream os;
      os << "Newton did not converge in " << opt.max_iter << " iterations (residual " << norm
         << "); time step too large or CFL violated";
      throw SolverError(os.str());
    }
    solver.fill_jacobian(ops, C, res.phi, p);
    const Vec dx = solver.solve(r);
    res.phi -= dx.head(n);
    res.mu -= dx.tail(n);
    ++res.iterations;
  }
  return res;
}

/// Convenience form: assembles the operators for v and solves one step.
inline std::pair<FEField, FEField> ch_step(const FEField& phi_old, const VelocityField& v, const CHParams& p,
                                           const NewtonOptions& opt = {}) {
  require_same_mesh(*phi_old.mesh(), *v.mesh(), "ch_step");
  p.validate();
  const MeshOperators ops(phi_old.mesh(), ControlShapes{});
  const SpMat C = assemble_convection(*phi_old.mesh(), v);
  StepSolver solver;
  const StepResult r = ch_step(ops, solver, C, phi_old.coeffs(), Vec::Zero(phi_old.size()), p, opt);
  return {FEField(phi_old.mesh(), r.phi), FEField(phi_old.mesh(), r.mu)};
}

/// mu from the second equation for a given phi (concave part at phi itself).
inline Vec chemical_potential(const MeshOperators& ops, const Vec& phi, const CHParams& p) {
  Eigen::SimplicialLDLT<SpMat> mass(ops.space.mass);
  const Vec rhs = p.sigma * p.epsilon * (ops.space.stiffness * phi) +
                  p.sigma / p.epsilon * nonlinear_load(ops.space.lumped, phi);
  return mass.solve(rhs);
}

struct AdaptSettings {
  bool enabled = false;
  int cadence = 10;
  AdaptOptions options;
  IndicatorOptions indicator;
};

enum class CflPolicy { ignore, warn, abort };

struct StateSolverOptions {
  NewtonOptions newton;
  AdaptSettings adapt;
  CflPolicy cfl = CflPolicy::warn;
  bool record_mu = true;
};

struct CflReport {
  double number = 0.0;
  bool pass = true;
};

inline CflReport cfl_check(double max_speed, double dt, double h_min) {
  const double c = max_speed * dt / h_min;
  return {c, c <= 1.0};
}

/// max_k |B u(t_k)|_inf * dt / h_min on a mesh, from nodal shape values.
inline CflReport cfl_check(const ControlVector& u, const MeshOperators& ops, const CHParams& p) {
  double vmax = 0.0;
  for (int k = 0; k < u.time_points(); ++k) vmax = std::max(vmax, ops.speed(u, k));
  return cfl_check(vmax, p.dt, ops.mesh()->h_min());
}

struct Trajectory {
  std::vector<FEField> phi;                     // k = 0..N
  std::vector<FEField> mu;                      // empty unless recorded
  std::vector<OperatorsPtr> ops;                // operators of phi[k]'s mesh
  std::vector<std::optional<SpMat>> transfer;   // transfer[k]: mesh k -> mesh k+1 when remeshed
  std::vector<double> mass;
  std::vector<double> energy;
  std::vector<int> newton_iterations;
  double max_cfl = 0.0;

  int steps() const { return static_cast<int>(phi.size()) - 1; }
  const MeshPtr& mesh(int k) const { return phi[static_cast<std::size_t>(k)].mesh(); }

  /// phi_k carried onto mesh k+1 (the explicit data of step k -> k+1).
  Vec carried(int k) const {
    const auto& T = transfer[static_cast<std::size_t>(k)];
    return T ? Vec(*T * phi[static_cast<std::size_t>(k)].coeffs()) : phi[static_cast<std::size_t>(k)].coeffs();
  }
};

/// Sequential steps with v = B u(t_{k+1}); optional remeshing every cadence
/// steps with nodal transfer of phi.
inline Trajectory solve_trajectory(const FEField& phi0, const ControlVector& u, OperatorCache& cache,
                                   const CHParams& p, const StateSolverOptions& opt = {}) {
  p.validate();
  const int N = p.steps();
  if (u.time_points() != N + 1) throw ControlError("solve_trajectory: control must have N_t + 1 time points");
  if (u.components() != cache.shapes().size()) throw ControlError("solve_trajectory: control/shape count mismatch");

  Trajectory traj;
  traj.phi.reserve(static_cast<std::size_t>(N) + 1);
  traj.phi.push_back(phi0);
  traj.ops.push_back(cache.get(phi0.mesh()));
  traj.transfer.reserve(static_cast<std::size_t>(N));

  auto record = [&](const MeshOperators& ops, const Vec& phi) {
    traj.mass.push_back((ops.space.mass * phi).sum());
    traj.energy.push_back(ginzburg_landau_energy(ops.space, phi, p.sigma, p.epsilon));
  };
  record(*traj.ops[0], phi0.coeffs());
  Vec mu = chemical_potential(*traj.ops[0], phi0.coeffs(), p);
  if (opt.record_mu) traj.mu.emplace_back(phi0.mesh(), mu);

  StepSolver solver;
  for (int k = 0; k < N; ++k) {
    OperatorsPtr ops = traj.ops.back();
    Vec phi_old = traj.phi.back().coeffs();
    std::optional<SpMat> T;
    if (opt.adapt.enabled && k > 0 && k % opt.adapt.cadence == 0) {
      const MeshPtr& old_mesh = ops->mesh();
      const auto eta = interface_indicator(*old_mesh, std::span<const double>(phi_old.data(), phi_old.size()),
                                           opt.adapt.indicator);
      MeshPtr next = refine_coarsen(*old_mesh, eta, opt.adapt.options);
      if (next->id() != old_mesh->id()) {
        T = interpolation_matrix(*old_mesh, *next);
        phi_old = *T * phi_old;
        mu = *T * mu;
        ops = cache.get(next);
      }
    }
    const double cfl = ops->speed(u, k + 1) * p.dt / ops->mesh()->h_min();
    traj.max_cfl = std::max(traj.max_cfl, cfl);
    if (cfl > 1.0 && opt.cfl != CflPolicy::ignore) {
      std::ostringstream os;
      os << "CFL number " << cfl << " exceeds 1 at step " << k + 1;
      if (opt.cfl == CflPolicy::abort) throw SolverError(os.str());
      log_warn(os.str());
    }
    const SpMat C = ops->transport(u, k + 1);
    StepResult r = ch_step(*ops, solver, C, phi_old, mu, p, opt.newton);
    mu = r.mu;
    traj.transfer.push_back(std::move(T));
    traj.phi.emplace_back(ops->mesh(), std::move(r.phi));
    if (opt.record_mu) traj.mu.emplace_back(ops->mesh(), mu);
    traj.ops.push_back(ops);
    traj.newton_iterations.push_back(r.iterations);
    record(*ops, traj.phi.back().coeffs());
  }
  return traj;
}

}  // namespace chopt
