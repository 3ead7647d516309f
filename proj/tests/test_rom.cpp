#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "chopt/rom.hpp"
#include "chopt/scenario.hpp"

using namespace chopt;

namespace {

Benchmark small_benchmark(int nt, int level = 4) {
  BenchmarkSettings s;
  s.params.end_time = nt * s.params.dt;
  s.mesh.base_level = level;
  return make_benchmark(s);
}

ControlVector ramp(int nt, double a, double b) {
  ControlVector u(1, nt);
  for (int k = 0; k < nt; ++k) u(0, k) = a + (b - a) * k / (nt - 1);
  return u;
}

struct Fixture {
  Benchmark bench;
  ControlVector u;
  Trajectory full;
  PODBasis basis;
  CommonSpace cs;
};

Fixture reproduce_setup(int nt) {
  Fixture f{small_benchmark(nt), ramp(nt + 1, 10.0, 40.0), {}, {}, {}};
  OperatorCache cache(f.bench.shapes);
  f.full = solve_trajectory(f.bench.phi0, f.u, cache, f.bench.settings.params, f.bench.solver);
  const SnapshotSet s = trajectory_snapshots(f.full, f.bench.settings.params.dt);
  f.cs = build_common_space(s);
  f.basis = compute_basis(f.cs, s.weights, kFullRank);
  return f;
}

}  // namespace

TEST(Rom, ReducedStiffnessMatchesDenseOracle) {
  const Fixture f = reproduce_setup(10);
  const ROMOperators r = build_rom(f.basis, f.bench.shapes, f.bench.phi0, f.bench.target, f.bench.settings.params,
                                   f.bench.settings.weights);
  const MeshOperators ops(f.basis.mesh, f.bench.shapes);
  const Eigen::MatrixXd M = ops.space.mass, K = ops.space.stiffness;
  const Eigen::MatrixXd& V = f.basis.modes;
  const Eigen::MatrixXd K2 = V.transpose() * K * M.inverse() * K * V;
  EXPECT_LT((r.K2 - K2).norm(), 1e-9 * K2.norm());
  const Eigen::MatrixXd L = V.transpose() * K * M.inverse() * ops.space.lumped.asDiagonal() * V;
  EXPECT_LT((r.L - L).norm(), 1e-9 * L.norm());
  EXPECT_LT((r.C[0] + r.C[0].transpose()).norm(), 1e-14 * (1 + r.C[0].norm()));
  EXPECT_LT((V.transpose() * M * V - Eigen::MatrixXd::Identity(V.cols(), V.cols())).norm(), 1e-10);
}

TEST(Rom, FullRankBasisReproducesTheFullModel) {
  const Fixture f = reproduce_setup(20);
  const ROMOperators r = build_rom(f.basis, f.bench.shapes, f.bench.phi0, f.bench.target, f.bench.settings.params,
                                   f.bench.settings.weights);
  const ROMTrajectory t = rom_solve(f.u, r);
  MeshPairDistance dist;
  EXPECT_LE(trajectory_error(f.full, t, r, dist), 1e-6);

  // costs agree as well. The target is nearly reachable, so J is small and a
  // state error e moves it by about sqrt(J * J_ref) |e| (Cauchy-Schwarz),
  // with J_ref the cost scale of an O(1) phase field on the unit square.
  FullOrderModel fom = f.bench.full_model();
  const double J = fom.evaluate_cost(f.u);
  const CostWeights& w = f.bench.settings.weights;
  const double J_ref = 0.5 * (w.beta1 * f.bench.settings.params.end_time + w.beta2);
  EXPECT_NEAR(rom_cost(t, f.u, r).total(), J, 1e-6 * std::sqrt(J * J_ref));
}

TEST(Rom, DeimWithFullSamplingIsExact) {
  const Fixture f = reproduce_setup(12);
  const int n = static_cast<int>(f.cs.Y.rows());
  // the cube snapshots span at most the snapshot count; complete with
  // unit vectors so the DEIM space is the whole space
  DEIMData d;
  d.U = Eigen::MatrixXd::Identity(n, n);
  d.indices = deim_select(d.U);
  const ROMOperators r = build_rom(f.basis, f.bench.shapes, f.bench.phi0, f.bench.target, f.bench.settings.params,
                                   f.bench.settings.weights, NonlinearTreatment::deim, &d);
  const ROMOperators e = build_rom(f.basis, f.bench.shapes, f.bench.phi0, f.bench.target, f.bench.settings.params,
                                   f.bench.settings.weights);
  const ROMTrajectory a = rom_solve(f.u, r), b = rom_solve(f.u, e);
  for (std::size_t k = 0; k < a.a.size(); ++k) EXPECT_LT((a.a[k] - b.a[k]).norm(), 1e-10 * (1 + b.a[k].norm()));
}

TEST(Rom, GradientMatchesFiniteDifferences) {
  const Fixture f = reproduce_setup(20);
  const SnapshotSet s = trajectory_snapshots(f.full, f.bench.settings.params.dt);
  for (NonlinearTreatment mode : {NonlinearTreatment::exact, NonlinearTreatment::deim}) {
    const int ell = 3;
    const PODBasis b = compute_basis(f.cs, s.weights, ell);
    const DEIMData d = build_deim(f.cs, 5);
    ReducedOrderModel rom(build_rom(b, f.bench.shapes, f.bench.phi0, f.bench.target, f.bench.settings.params,
                                    f.bench.settings.weights, mode, &d),
                          {1e-12, 1e-13, 30});
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> uni(0.0, 50.0), dir(-1.0, 1.0);
    ControlVector u(1, 21);
    for (int k = 0; k < 21; ++k) u(0, k) = uni(rng);
    const ControlVector g = rom.evaluate_gradient(u);
    const Eigen::VectorXd w = rom.time_weights();
    for (int trial = 0; trial < 3; ++trial) {
      ControlVector h(1, 21);
      for (int k = 0; k < 21; ++k) h(0, k) = dir(rng);
      const double tau = 1e-3;
      ControlVector up(Eigen::MatrixXd(u.values() + tau * h.values()));
      ControlVector um(Eigen::MatrixXd(u.values() - tau * h.values()));
      const double fd = (rom.evaluate_cost(up) - rom.evaluate_cost(um)) / (2 * tau);
      const double an = control_inner(g, h, w);
      EXPECT_NEAR(an, fd, 1e-5 * std::abs(fd)) << static_cast<int>(mode) << " " << trial;
    }
  }
}

TEST(Rom, RejectsMismatchedInput) {
  const Fixture f = reproduce_setup(10);
  const ROMOperators r = build_rom(f.basis, f.bench.shapes, f.bench.phi0, f.bench.target, f.bench.settings.params,
                                   f.bench.settings.weights);
  EXPECT_THROW(rom_solve(ControlVector(1, 5), r), ControlError);
  EXPECT_THROW(build_rom(f.basis, f.bench.shapes, f.bench.phi0, f.bench.target, f.bench.settings.params,
                         f.bench.settings.weights, NonlinearTreatment::deim, nullptr),
               DEIMError);
}
