#pragma once

// Projected gradient method with Armijo backtracking for box-constrained
// controls, generic over the model supplying the reduced cost and gradient.

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "chopt/control.hpp"
#include "chopt/log.hpp"

namespace chopt {

/// What the optimizer needs from a (full or reduced) model.
template <class M>
concept ReducedCostModel = requires(M& m, const ControlVector& u) {
  { m.evaluate_cost(u) } -> std::convertible_to<double>;
  { m.evaluate_gradient(u) } -> std::convertible_to<ControlVector>;
  { m.time_weights() } -> std::convertible_to<Eigen::VectorXd>;
};

struct ArmijoOptions {
  double s_init = 1.0;
  double shrink = 0.25;
  double c_armijo = 1e-4;
  int max_backtracks = 25;
};

struct OptimizerOptions {
  ArmijoOptions armijo;
  double rel_tol = 0.01;
  double abs_tol = 0.01;
  int max_iter = 50;
};

struct IterationRecord {
  int k = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  std::optional<double> step;  // s_k used to leave u^k; empty for the last iterate
};

enum class OptimizerStatus { converged, max_iterations, line_search_failed, stationary };

inline std::string to_string(OptimizerStatus s) {
  switch (s) {
    case OptimizerStatus::converged: return "converged";
    case OptimizerStatus::max_iterations: return "max_iterations";
    case OptimizerStatus::line_search_failed: return "line_search_failed";
    case OptimizerStatus::stationary: return "stationary";
  }
  return "unknown";
}

struct OptimizationResult {
  ControlVector u;
  double cost = 0.0;
  std::vector<IterationRecord> history;
  OptimizerStatus status = OptimizerStatus::max_iterations;
  bool converged() const { return status == OptimizerStatus::converged; }
};

struct ArmijoResult {
  bool accepted = false;
  double step = 0.0;
  ControlVector u;
  double cost = 0.0;
  int backtracks = 0;
};

/// Largest s in {s_init shrink^j} with
///   J(P(u - s g)) <= J(u) - c/s ||P(u - s g) - u||^2.
template <ReducedCostModel Model>
ArmijoResult armijo_search(const ControlVector& u, double cost_u, const ControlVector& g, Model& model,
                           const BoxBounds& box, const ArmijoOptions& opt = {}) {
  const Eigen::VectorXd w = model.time_weights();
  ArmijoResult r;
  double s = opt.s_init;
  for (int j = 0; j <= opt.max_backtracks; ++j, s *= opt.shrink) {
    ControlVector trial = project_box(ControlVector(Eigen::MatrixXd(u.values() - s * g.values())), box);
    const ControlVector d(Eigen::MatrixXd(trial.values() - u.values()));
    const double dn2 = control_inner(d, d, w);
    double c = std::numeric_limits<double>::infinity();
    try {
      c = model.evaluate_cost(trial);
    } catch (const std::runtime_error& e) {
      // a failed forward solve counts as an unacceptable step
      log_warn(std::string("line search: trial step rejected: ") + e.what());
    }
    if (std::isfinite(c) && c <= cost_u - opt.c_armijo / s * dn2) {
      r.accepted = true;
      r.step = s;
      r.u = std::move(trial);
      r.cost = c;
      r.backtracks = j;
      return r;
    }
  }
  r.backtracks = opt.max_backtracks;
  return r;
}

template <ReducedCostModel Model>
OptimizationResult projected_gradient(const ControlVector& u0, Model& model, const BoxBounds& box,
                                      const OptimizerOptions& opt = {}) {
  box.validate();
  if (!box.admissible(u0)) throw ControlError("projected_gradient: initial control is not admissible");
  const Eigen::VectorXd w = model.time_weights();
  OptimizationResult res;
  res.u = u0;
  res.cost = model.evaluate_cost(u0);
  ControlVector g = model.evaluate_gradient(u0);
  double gn = control_norm(g, w);
  const double tol = opt.rel_tol * gn + opt.abs_tol;
  for (int k = 0;; ++k) {
    res.history.push_back({k, res.cost, gn, std::nullopt});
    log_info("iter " + std::to_string(k) + "  J = " + std::to_string(res.cost) + "  |g| = " + std::to_string(gn));
    if (gn < tol) {
      res.status = OptimizerStatus::converged;
      break;
    }
    if (k >= opt.max_iter) {
      res.status = OptimizerStatus::max_iterations;
      break;
    }
    ArmijoResult ls = armijo_search(res.u, res.cost, g, model, box, opt.armijo);
    if (!ls.accepted) {
      res.status = OptimizerStatus::line_search_failed;
      break;
    }
    res.history.back().step = ls.step;
    if (ls.u == res.u) {
      // projected step vanished: u is a fixed point of the projection
      res.status = OptimizerStatus::stationary;
      break;
    }
    res.u = std::move(ls.u);
    res.cost = ls.cost;
    g = model.evaluate_gradient(res.u);
    gn = control_norm(g, w);
  }
  return res;
}

}  // namespace chopt
