#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "chopt/full_model.hpp"
#include "chopt/scenario.hpp"

using namespace chopt;

namespace {

CHParams steps(int n) {
  CHParams p;
  p.end_time = n * p.dt;
  return p;
}

FEField random_field(const MeshPtr& m, std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> d(-amp, amp);
  return FEField::interpolate(m, [&](Point) { return d(rng); });
}

ControlVector random_control(int nt, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  ControlVector u(1, nt);
  for (int k = 0; k < nt; ++k) u(0, k) = d(rng);
  return u;
}

}  // namespace

// Space-time residual G(X; u) = 0 of the whole time-stepping scheme on one
// mesh, written out densely; its Jacobian is taken by finite differences
// and the adjoint is one dense transposed solve.
TEST(Adjoint, MatchesDenseSpaceTimeTranspose) {
  const MeshPtr m = initial_mesh(1);
  const int N = 3;
  const CHParams p = steps(N);
  std::mt19937_64 rng(5);
  OperatorCache cache(ControlShapes::single_vortex());
  const auto ops = cache.get(m);
  const FEField phi0 = random_field(m, rng, 0.8);
  std::vector<FEField> desired;
  for (int k = 0; k <= N; ++k) desired.push_back(random_field(m, rng, 1.0));
  const TrackingTarget target{desired, random_field(m, rng, 1.0)};
  const CostWeights w{3.0, 5.0, 1e-2};
  const ControlVector u = random_control(N + 1, rng, 0.0, 3000.0);

  const Trajectory traj = solve_trajectory(phi0, u, cache, p);
  MeshPairDistance dist;
  std::vector<Vec> d_phi;
  evaluate_cost(traj, u, target, w, p, dist, &d_phi);
  const AdjointTrajectory adj = solve_adjoint(traj, u, d_phi, p);

  const Eigen::Index n = phi0.size();
  const Eigen::MatrixXd M = ops->space.mass, K = ops->space.stiffness, C1 = ops->convection[0];
  const Eigen::VectorXd ml = ops->space.lumped;
  auto G = [&](const Eigen::VectorXd& X) {
    Eigen::VectorXd r(X.size());
    for (int k = 1; k <= N; ++k) {
      const Eigen::VectorXd phi = X.segment(2 * n * (k - 1), n), mu = X.segment(2 * n * (k - 1) + n, n);
      const Eigen::VectorXd prev = k == 1 ? phi0.coeffs() : Eigen::VectorXd(X.segment(2 * n * (k - 2), n));
      r.segment(2 * n * (k - 1), n) = M * (phi - prev) / p.dt + u(0, k) * C1 * phi + p.mobility * K * mu;
      Eigen::VectorXd nl(n);
      for (Eigen::Index i = 0; i < n; ++i) nl[i] = ml[i] * (std::pow(phi[i], 3) - prev[i]);
      r.segment(2 * n * (k - 1) + n, n) = p.sigma * p.epsilon * K * phi + p.sigma / p.epsilon * nl - M * mu;
    }
    return r;
  };
  Eigen::VectorXd X(2 * n * N);
  for (int k = 1; k <= N; ++k) {
    X.segment(2 * n * (k - 1), n) = traj.phi[k].coeffs();
    X.segment(2 * n * (k - 1) + n, n) = traj.mu[k].coeffs();
  }
  ASSERT_LT(G(X).norm(), 1e-9);
  Eigen::MatrixXd J(X.size(), X.size());
  for (Eigen::Index j = 0; j < X.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(X[j]));
    Eigen::VectorXd xp = X, xm = X;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (G(xp) - G(xm)) / (2 * h);
  }
  // dJ/dX: tracking with trapezoid weights plus the terminal term
  Eigen::VectorXd dJ = Eigen::VectorXd::Zero(X.size());
  const Eigen::VectorXd tw = trapezoid_weights(N + 1, p.dt);
  for (int k = 1; k <= N; ++k) {
    dJ.segment(2 * n * (k - 1), n) = w.beta1 * tw[k] * M * (traj.phi[k].coeffs() - desired[k].coeffs());
  }
  dJ.segment(2 * n * (N - 1), n) += w.beta2 * M * (traj.phi[N].coeffs() - target.terminal.coeffs());
  const Eigen::VectorXd lam = J.transpose().fullPivLu().solve(-dJ);
  double scale = lam.cwiseAbs().maxCoeff();
  for (int k = 1; k <= N; ++k) {
    EXPECT_LT((adj.p[k] - lam.segment(2 * n * (k - 1), n)).cwiseAbs().maxCoeff(), 1e-7 * scale) << k;
    EXPECT_LT((adj.q[k] - lam.segment(2 * n * (k - 1) + n, n)).cwiseAbs().maxCoeff(), 1e-7 * scale) << k;
  }
  // gradient: dJ/du_k = gamma w_k u_k + lam_k^T dG_k/du_k
  const ControlVector g = reduced_gradient(u, traj, adj, p, w.gamma);
  for (int k = 1; k <= N; ++k) {
    const double dense = w.gamma * tw[k] * u(0, k) + lam.segment(2 * n * (k - 1), n).dot(C1 * traj.phi[k].coeffs());
    EXPECT_NEAR(g(0, k) * tw[k], dense, 1e-7 * std::abs(dense) + 1e-12);
  }
  EXPECT_DOUBLE_EQ(g(0, 0), w.gamma * u(0, 0));
}

TEST(Adjoint, ZeroWeightsGiveZeroAdjoint) {
  const MeshPtr m = initial_mesh(3);
  const CHParams p = steps(5);
  std::mt19937_64 rng(1);
  OperatorCache cache(ControlShapes::single_vortex());
  const FEField phi0 = random_field(m, rng, 0.5);
  const ControlVector u = random_control(6, rng, 0, 50);
  const Trajectory t = solve_trajectory(phi0, u, cache, p);
  const TrackingTarget target{std::vector<FEField>(6, FEField::constant(m, 1.0)), FEField::constant(m, 1.0)};
  MeshPairDistance dist;
  std::vector<Vec> d;
  evaluate_cost(t, u, target, CostWeights{0.0, 0.0, 1.0}, p, dist, &d);
  const AdjointTrajectory adj = solve_adjoint(t, u, d, p);
  for (int k = 0; k <= 5; ++k) {
    EXPECT_EQ(adj.p[k].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(adj.q[k].cwiseAbs().maxCoeff(), 0.0);
  }
  const ControlVector g = reduced_gradient(u, t, adj, p, 1.0);
  EXPECT_EQ(g.values(), u.values());

  // doubling the weights doubles the multipliers
  std::vector<Vec> d1, d2;
  evaluate_cost(t, u, target, CostWeights{1.0, 2.0, 1.0}, p, dist, &d1);
  evaluate_cost(t, u, target, CostWeights{2.0, 4.0, 1.0}, p, dist, &d2);
  const AdjointTrajectory a1 = solve_adjoint(t, u, d1, p), a2 = solve_adjoint(t, u, d2, p);
  for (int k = 1; k <= 5; ++k) EXPECT_LT((2.0 * a1.p[k] - a2.p[k]).norm(), 1e-12 * a2.p[k].norm());
}

TEST(Adjoint, PerfectTrackingLeavesOnlyControlCost) {
  const MeshPtr m = initial_mesh(3);
  const CHParams p = steps(6);
  std::mt19937_64 rng(2);
  OperatorCache cache(ControlShapes::single_vortex());
  const FEField phi0 = random_field(m, rng, 0.5);
  const ControlVector u = random_control(7, rng, 0, 50);
  FullOrderModel model(phi0, TrackingTarget::from_trajectory(solve_trajectory(phi0, u, cache, p)),
                       ControlShapes::single_vortex(), p, CostWeights{});
  const CostBreakdown c = model.cost_breakdown(u);
  EXPECT_EQ(c.tracking, 0.0);
  EXPECT_EQ(c.terminal, 0.0);
  EXPECT_NEAR(c.control, 0.5 * 1e-4 * control_inner(u, u, model.time_weights()), 1e-18);
}

TEST(Adjoint, CostAcrossMeshesUsesCommonRefinement) {
  // same function on two nested meshes: distance zero; different meshes
  // with a known affine difference
  const MeshPtr a = initial_mesh(3), b = initial_mesh(4);
  const FEField fa = FEField::interpolate(a, [](Point p) { return p.x; });
  const FEField fb = FEField::interpolate(b, [](Point p) { return p.x + 1.0; });
  MeshPairDistance dist;
  EXPECT_NEAR(dist(fa, fb), 1.0, 1e-13);
  Vec g;
  dist(fa, fb, &g);
  EXPECT_NEAR(g.sum(), -2.0, 1e-13);
}

namespace {

// Central differences of the model cost along direction d with the step
// rule h = 1e-4 (1 + |u|).
template <class Model>
double directional_fd(Model& model, const ControlVector& u, const ControlVector& d) {
  const double h = 1e-4 * (1.0 + u.values().cwiseAbs().maxCoeff());
  const ControlVector up(Eigen::MatrixXd(u.values() + h * d.values()));
  const ControlVector um(Eigen::MatrixXd(u.values() - h * d.values()));
  return (model.evaluate_cost(up) - model.evaluate_cost(um)) / (2 * h);
}

}  // namespace

TEST(Adjoint, GradientMatchesFiniteDifferences) {
  BenchmarkSettings s;
  s.params = steps(20);
  s.mesh.base_level = 4;
  const Benchmark b = make_benchmark(s);
  FullOrderModel model = b.full_model();
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2; ++trial) {
    const ControlVector u = random_control(21, rng, 0.0, 50.0);
    const ControlVector g = model.evaluate_gradient(u);
    for (int dir = 0; dir < 2; ++dir) {
      const ControlVector d = random_control(21, rng, -1.0, 1.0);
      const double exact = control_inner(g, d, model.time_weights());
      const double fd = directional_fd(model, u, d);
      EXPECT_NEAR(exact, fd, 1e-5 * std::abs(fd)) << trial << "/" << dir;
    }
  }
}

TEST(Adjoint, GradientIsExactAcrossRemeshing) {
  BenchmarkSettings s;
  s.params = steps(25);
  s.mesh.base_level = 4;
  s.mesh.adaptive = true;
  s.mesh.max_level = 6;
  s.mesh.min_level = 3;
  const Benchmark b = make_benchmark(s);
  FullOrderModel model = b.full_model();
  std::mt19937_64 rng(23);
  const ControlVector u = random_control(26, rng, 5.0, 45.0);
  const ControlVector g = model.evaluate_gradient(u);
  const Trajectory& t = model.trajectory(u);
  int remeshed = 0;
  for (const auto& T : t.transfer) remeshed += T.has_value();
  ASSERT_GE(remeshed, 1);
  std::vector<std::uint64_t> ids;
  for (int k = 0; k <= t.steps(); ++k) ids.push_back(t.mesh(k)->id());
  const ControlVector d = random_control(26, rng, -1.0, 1.0);
  // the perturbed runs must follow the same mesh sequence for the check to
  // be meaningful
  const double h = 1e-4 * (1.0 + u.values().cwiseAbs().maxCoeff());
  OperatorCache cache(b.shapes);
  for (double sign : {-1.0, 1.0}) {
    const ControlVector up(Eigen::MatrixXd(u.values() + sign * h * d.values()));
    const Trajectory tp = solve_trajectory(b.phi0, up, cache, s.params, b.solver);
    for (int k = 0; k <= t.steps(); ++k) ASSERT_EQ(tp.mesh(k)->id(), ids[k]) << k;
  }
  const double fd = directional_fd(model, u, d);
  EXPECT_NEAR(control_inner(g, d, model.time_weights()), fd, 1e-5 * std::abs(fd));
}
