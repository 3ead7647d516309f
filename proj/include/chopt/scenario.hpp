#pragma once

// The cross-shaped benchmark: initial cross, a desired trajectory
// manufactured from a reference control, and matching solver settings.

#include <algorithm>
#include <cmath>

#include "chopt/adjoint_solver.hpp"
#include "chopt/full_model.hpp"
#include "chopt/state_solver.hpp"

namespace chopt {

/// Signed distance to an axis-aligned box (negative inside).
inline double box_distance(Point p, Point center, double half_x, double half_y) {
  const double dx = std::abs(p.x - center.x) - half_x;
  const double dy = std::abs(p.y - center.y) - half_y;
  const double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
  return outside + std::min(std::max(dx, dy), 0.0);
}

/// Two crossing bars. The default sits off the vortex centre and has unequal
/// bars: a centred square cross is nearly invariant under quarter turns, and
/// once the reference control rotates it past 45 degrees the cost along
/// constant controls is no longer monotone (u = 0 becomes a stationary point
/// of the projected gradient).
struct CrossShape {
  Point center{0.4, 0.5};
  double arm_x = 0.3;  // half-length of the horizontal bar
  double arm_y = 0.2;  // half-length of the vertical bar
  double width = 0.08;  // half-width of both bars

  /// tanh profile of the signed distance, +1 inside the cross.
  double operator()(Point p, double epsilon) const {
    const double d = std::min(box_distance(p, center, arm_x, width), box_distance(p, center, width, arm_y));
    return std::tanh(-d / (std::sqrt(2.0) * epsilon));
  }
};

struct MeshSettings {
  int base_level = 5;
  bool adaptive = false;
  int max_level = 7;
  int min_level = 4;
  int initial_cycles = 4;  // refinement cycles resolving the initial profile
  AdaptOptions adapt;
  IndicatorOptions indicator;
  int cadence = 10;
};

/// Mesh for an analytic initial profile: the base level, adapted a few times
/// when adaptivity is on.
template <class F>
MeshPtr resolve_initial_mesh(const MeshSettings& ms, F&& profile) {
  MeshPtr m = initial_mesh(ms.base_level);
  if (!ms.adaptive) return m;
  AdaptOptions opt = ms.adapt;
  opt.max_depth = depth_of_level(ms.max_level);
  opt.min_depth = depth_of_level(ms.min_level);
  opt.frac_coarsen = 0.0;
  for (int c = 0; c < ms.initial_cycles; ++c) {
    const FEField f = FEField::interpolate(m, profile);
    const auto eta = interface_indicator(*m, std::span<const double>(f.coeffs().data(), f.size()), ms.indicator);
    MeshPtr next = refine_coarsen(*m, eta, opt);
    if (next->id() == m->id()) break;
    m = next;
  }
  return m;
}

inline StateSolverOptions solver_options(const MeshSettings& ms) {
  StateSolverOptions o;
  o.adapt.enabled = ms.adaptive;
  o.adapt.cadence = ms.cadence;
  o.adapt.options = ms.adapt;
  o.adapt.options.max_depth = depth_of_level(ms.max_level);
  o.adapt.options.min_depth = depth_of_level(ms.min_level);
  o.adapt.indicator = ms.indicator;
  return o;
}

struct BenchmarkSettings {
  CHParams params;
  CostWeights weights;
  double u_lower = 0.0;
  double u_upper = 50.0;
  double u_desired = 30.0;
  CrossShape cross;
  MeshSettings mesh;
};

struct Benchmark {
  BenchmarkSettings settings;
  ControlShapes shapes;
  BoxBounds box;
  FEField phi0;
  Trajectory desired;
  TrackingTarget target;
  StateSolverOptions solver;

  FullOrderModel full_model() const {
    return FullOrderModel(phi0, target, shapes, settings.params, settings.weights, solver);
  }
  ControlVector zero_control() const { return ControlVector(shapes.size(), settings.params.time_points(), 0.0); }
  ControlVector desired_control() const {
    return ControlVector(shapes.size(), settings.params.time_points(), settings.u_desired);
  }
};

/// phi_d is the trajectory under the constant control u_desired; phi_0 =
/// phi_d(0) and phi_T = phi_d(T), so the target is exactly reachable.
inline Benchmark make_benchmark(const BenchmarkSettings& s) {
  s.params.validate();
  s.weights.validate();
  const double eps = s.params.epsilon;
  const CrossShape cross = s.cross;
  auto profile = [cross, eps](Point p) { return cross(p, eps); };
  const MeshPtr m0 = resolve_initial_mesh(s.mesh, profile);
  Benchmark b{s,
              ControlShapes::single_vortex(),
              BoxBounds::uniform(1, s.u_lower, s.u_upper),
              FEField::interpolate(m0, profile),
              {},
              {{}, FEField::constant(m0, 0.0)},
              solver_options(s.mesh)};
  OperatorCache cache(b.shapes);
  b.desired = solve_trajectory(b.phi0, b.desired_control(), cache, s.params, b.solver);
  b.target = TrackingTarget::from_trajectory(b.desired);
  return b;
}

}  // namespace chopt
