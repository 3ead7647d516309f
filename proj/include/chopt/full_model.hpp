#pragma once

#include <optional>
#include <utility>

#include "chopt/adjoint_solver.hpp"
#include "chopt/optimizer.hpp"
#include "chopt/state_solver.hpp"

namespace chopt {

/// Reduced cost u -> J(phi(u), u) of the finite element model. The trajectory
/// of the most recent control is kept so a gradient after a cost evaluation
/// at the same u costs one adjoint sweep.
class FullOrderModel {
 public:
  FullOrderModel(FEField phi0, TrackingTarget target, ControlShapes shapes, CHParams params, CostWeights weights,
                 StateSolverOptions options = {})
      : phi0_(std::move(phi0)),
        target_(std::move(target)),
        cache_(std::move(shapes)),
        params_(params),
        weights_(weights),
        options_(options) {
    params_.validate();
    weights_.validate();
    if (static_cast<int>(target_.desired.size()) != params_.time_points()) {
      throw SolverError("FullOrderModel: desired trajectory must have N_t + 1 fields");
    }
  }

  double evaluate_cost(const ControlVector& u) { return cost_breakdown(u).total(); }

  CostBreakdown cost_breakdown(const ControlVector& u) {
    ensure(u);
    return last_->cost;
  }

  ControlVector evaluate_gradient(const ControlVector& u) {
    ensure(u);
    std::vector<Vec> d_phi;
    chopt::evaluate_cost(last_->traj, u, target_, weights_, params_, dist_, &d_phi);
    const AdjointTrajectory adj = solve_adjoint(last_->traj, u, d_phi, params_);
    ++adjoint_solves_;
    return reduced_gradient(u, last_->traj, adj, params_, weights_.gamma);
  }

  Eigen::VectorXd time_weights() const { return trapezoid_weights(params_.time_points(), params_.dt); }

  const Trajectory& trajectory(const ControlVector& u) {
    ensure(u);
    return last_->traj;
  }

  AdjointTrajectory adjoint(const ControlVector& u) {
    ensure(u);
    std::vector<Vec> d_phi;
    chopt::evaluate_cost(last_->traj, u, target_, weights_, params_, dist_, &d_phi);
    return solve_adjoint(last_->traj, u, d_phi, params_);
  }

  const CHParams& params() const { return params_; }
  const CostWeights& weights() const { return weights_; }
  const TrackingTarget& target() const { return target_; }
  const FEField& initial_state() const { return phi0_; }
  OperatorCache& operators() { return cache_; }
  int state_solves() const { return state_solves_; }
  int adjoint_solves() const { return adjoint_solves_; }

 private:
  struct Evaluated {
    ControlVector u;
    Trajectory traj;
    CostBreakdown cost;
  };

  void ensure(const ControlVector& u) {
    if (last_ && last_->u == u) return;
    last_.reset();
    Trajectory t = solve_trajectory(phi0_, u, cache_, params_, options_);
    ++state_solves_;
    const CostBreakdown c = chopt::evaluate_cost(t, u, target_, weights_, params_, dist_);
    last_.emplace(Evaluated{u, std::move(t), c});
  }

  FEField phi0_;
  TrackingTarget target_;
  OperatorCache cache_;
  CHParams params_;
  CostWeights weights_;
  StateSolverOptions options_;
  MeshPairDistance dist_;
  std::optional<Evaluated> last_;
  int state_solves_ = 0;
  int adjoint_solves_ = 0;
};

static_assert(ReducedCostModel<FullOrderModel>);

}  // namespace chopt
