#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "chopt/pod.hpp"

using namespace chopt;

namespace {

MeshPtr refined_near(double x0) {
  MeshPtr m = initial_mesh(3);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> phi;
    for (const Point& p : m->points()) phi.push_back(std::tanh((p.x - x0) / 0.03));
    m = refine_coarsen(*m, interface_indicator(*m, phi));
  }
  return m;
}

SnapshotSet moving_front(int count) {
  SnapshotSet s;
  for (int j = 0; j < count; ++j) {
    const double x0 = 0.2 + 0.6 * j / (count - 1);
    const MeshPtr m = refined_near(std::round(x0 * 4) / 4);  // a handful of distinct meshes
    s.fields.push_back(FEField::interpolate(m, [x0](Point p) { return std::tanh((p.x - x0 + 0.1 * p.y * p.y) / 0.05); }));
  }
  s.weights = Eigen::VectorXd::Constant(count, 1.0 / count);
  s.weights[0] *= 0.5;
  s.weights[count - 1] *= 0.5;
  return s;
}

}  // namespace

TEST(Pod, CommonSpacePreservesNorms) {
  const SnapshotSet s = moving_front(9);
  const CommonSpace cs = build_common_space(s);
  for (std::size_t j = 0; j < s.fields.size(); ++j) {
    EXPECT_TRUE(cs.mesh->refines(*s.fields[j].mesh()));
    const SpMat M = assemble_mass(*s.fields[j].mesh());
    const double own = s.fields[j].coeffs().dot(M * s.fields[j].coeffs());
    const Eigen::VectorXd y = cs.Y.col(static_cast<Eigen::Index>(j));
    EXPECT_NEAR(y.dot(cs.mass * y), own, 1e-12 * own);
  }
}

TEST(Pod, SingleMeshIsKept) {
  const MeshPtr m = initial_mesh(3);
  SnapshotSet s{{FEField::constant(m, 1.0), FEField::constant(m, 2.0)}, Eigen::Vector2d(1.0, 1.0), "t"};
  EXPECT_EQ(build_common_space(s).mesh->id(), m->id());
}

TEST(Pod, RankOneGram) {
  const MeshPtr m = initial_mesh(3);
  const FEField y = FEField::interpolate(m, [](Point p) { return p.x - 2 * p.y; });
  SnapshotSet s{{y, y, y}, Eigen::Vector3d::Ones(), "copies"};
  const CommonSpace cs = build_common_space(s);
  const PODBasis b = compute_basis(cs, s.weights, 1);
  const double ny2 = y.coeffs().dot(cs.mass * y.coeffs());
  EXPECT_NEAR(b.eigenvalues[0], 3.0 * ny2, 1e-12);
  EXPECT_EQ(b.rank, 1);
  const Eigen::VectorXd ref = y.coeffs() / std::sqrt(ny2);
  EXPECT_LT(std::min((b.modes.col(0) - ref).norm(), (b.modes.col(0) + ref).norm()), 1e-12);
  EXPECT_THROW(compute_basis(cs, s.weights, 2), PODError);
}

TEST(Pod, OrthogonalPair) {
  // two M-orthogonal snapshots with norms 2 and 1
  const MeshPtr m = initial_mesh(4);
  const SpMat M = assemble_mass(*m);
  Eigen::VectorXd a = FEField::interpolate(m, [](Point p) { return std::cos(M_PI * p.x); }).coeffs();
  Eigen::VectorXd c = FEField::interpolate(m, [](Point p) { return std::cos(2 * M_PI * p.y); }).coeffs();
  c -= c.dot(M * a) / a.dot(M * a) * a;
  a *= 2.0 / std::sqrt(a.dot(M * a));
  c /= std::sqrt(c.dot(M * c));
  SnapshotSet s{{FEField(m, a), FEField(m, c)}, Eigen::Vector2d::Ones(), "pair"};
  const PODBasis b = compute_basis(build_common_space(s), s.weights, 2);
  EXPECT_NEAR(b.eigenvalues[0], 4.0, 1e-12);
  EXPECT_NEAR(b.eigenvalues[1], 1.0, 1e-12);
  EXPECT_NEAR(std::abs(b.modes.col(0).dot(M * a)), 2.0, 1e-12);
}

TEST(Pod, GramEigenpairsMatchDenseOracle) {
  const SnapshotSet s = moving_front(20);
  const CommonSpace cs = build_common_space(s);
  const PODBasis b = compute_basis(cs, s.weights, 8);
  // oracle: generalized problem through the Cholesky factor of the dense M
  const Eigen::MatrixXd Md = cs.mass;
  const Eigen::MatrixXd R = Md.llt().matrixU();
  const Eigen::MatrixXd Z = R * cs.Y * s.weights.cwiseSqrt().asDiagonal();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU);
  for (int i = 0; i < 8; ++i) {
    const double sv2 = svd.singularValues()[i] * svd.singularValues()[i];
    EXPECT_NEAR(b.eigenvalues[i], sv2, 1e-10 * b.eigenvalues[0]);
    // modes: R psi_i = +-u_i
    const Eigen::VectorXd Rpsi = R * b.modes.col(i);
    EXPECT_NEAR(std::abs(Rpsi.dot(svd.matrixU().col(i))), 1.0, 1e-8);
  }
}

TEST(Pod, ModesAreMOrthonormal) {
  const SnapshotSet s = moving_front(25);
  const CommonSpace cs = build_common_space(s);
  const PODBasis b = compute_basis(cs, s.weights, kFullRank);
  const Eigen::MatrixXd G = b.modes.transpose() * (cs.mass * b.modes);
  EXPECT_LT((G - Eigen::MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 1; i < b.eigenvalues.size(); ++i) EXPECT_LE(b.eigenvalues[i], b.eigenvalues[i - 1]);
}

TEST(Pod, EnergyIdentity) {
  const SnapshotSet s = moving_front(25);
  const CommonSpace cs = build_common_space(s);
  const double total = compute_basis(cs, s.weights, 1).total();
  for (int ell : {0, 1, 3, 6}) {
    const PODBasis b = compute_basis(cs, s.weights, ell);
    const ProjectionError e = projection_error(cs, s.weights, b);
    if (ell == 0) { EXPECT_NEAR(e.direct, total, 1e-12 * total); }
    EXPECT_NEAR(e.direct, e.tail, 1e-10 * e.tail) << ell;
  }
  const PODBasis full = compute_basis(cs, s.weights, kFullRank);
  EXPECT_LT(projection_error(cs, s.weights, full).direct, 1e-10 * total);
}

TEST(Pod, PermutationChangesModesOnlyBySign) {
  SnapshotSet s = moving_front(12);
  const CommonSpace cs = build_common_space(s);
  const PODBasis b = compute_basis(cs, s.weights, 4);
  SnapshotSet r = s;
  std::reverse(r.fields.begin(), r.fields.end());
  std::reverse(r.weights.begin(), r.weights.end());
  const PODBasis br = compute_basis(build_common_space(r), r.weights, 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(std::abs(b.modes.col(i).dot(cs.mass * br.modes.col(i))), 1.0, 1e-8);
  }
}

TEST(Pod, RejectsBadSnapshotSets) {
  const MeshPtr m = initial_mesh(2);
  EXPECT_THROW(build_common_space(SnapshotSet{{FEField::constant(m, 1.0)}, Eigen::VectorXd::Ones(1), ""}), PODError);
  EXPECT_THROW(build_common_space(SnapshotSet{{FEField::constant(m, 1.0), FEField::constant(m, 1.0)},
                                              Eigen::Vector2d(1.0, -1.0), ""}),
               PODError);
}
