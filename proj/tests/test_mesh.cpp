#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "chopt/mesh.hpp"

using namespace chopt;

namespace {

double total_area(const AdaptiveMesh& m) {
  const auto a = m.areas();
  return std::accumulate(a.begin(), a.end(), 0.0);
}

std::vector<double> disc_field(const AdaptiveMesh& m, double r) {
  std::vector<double> phi;
  for (const Point& p : m.points()) phi.push_back(std::tanh((r - std::hypot(p.x - 0.5, p.y - 0.5)) / 0.03));
  return phi;
}

}  // namespace

TEST(Mesh, UniformLevelsHaveExpectedCounts) {
  for (int n = 1; n <= 6; ++n) {
    const MeshPtr m = initial_mesh(n);
    const std::size_t side = std::size_t{1} << (n - 1);  // squares per side
    EXPECT_EQ(m->num_triangles(), 4 * side * side);
    EXPECT_EQ(m->num_vertices(), (side + 1) * (side + 1) + side * side);
    EXPECT_NEAR(total_area(*m), 1.0, 1e-14);
    EXPECT_TRUE(is_conforming(*m));
    EXPECT_DOUBLE_EQ(m->h_min(), min_edge_at_depth(depth_of_level(n)));
  }
  EXPECT_EQ(initial_mesh(4)->num_vertices(), 145u);
}

TEST(Mesh, IdIsAFunctionOfTheLeafSet) {
  EXPECT_EQ(initial_mesh(3)->id(), initial_mesh(3)->id());
  EXPECT_NE(initial_mesh(3)->id(), initial_mesh(4)->id());
}

TEST(Mesh, ElementsAreCounterClockwise) {
  const MeshPtr m = initial_mesh(3);
  for (const double a : m->areas()) EXPECT_GT(a, 0.0);
}

TEST(Mesh, ZeroIndicatorLeavesMeshUnchanged) {
  const MeshPtr m = initial_mesh(3);
  const std::vector<double> eta(m->num_triangles(), 0.0);
  EXPECT_EQ(refine_coarsen(*m, eta)->id(), m->id());
}

TEST(Mesh, UniformMarkingQuadruplesTriangles) {
  const MeshPtr m = initial_mesh(3);
  const std::vector<double> eta(m->num_triangles(), 1.0);
  AdaptOptions opt;
  opt.frac_refine = 1.0;
  opt.frac_coarsen = 0.0;
  EXPECT_EQ(refine_coarsen(*m, eta, opt)->id(), initial_mesh(4)->id());
}

TEST(Mesh, AdaptationKeepsConformityAndArea) {
  MeshPtr m = initial_mesh(3);
  for (int cycle = 0; cycle < 5; ++cycle) {
    const auto phi = disc_field(*m, 0.25);
    AdaptStats st;
    m = refine_coarsen(*m, interface_indicator(*m, phi), {}, &st);
    EXPECT_GT(st.marked, 0);
    EXPECT_TRUE(is_conforming(*m));
    EXPECT_NEAR(total_area(*m), 1.0, 1e-13);
  }
  EXPECT_GT(m->max_depth(), depth_of_level(3));
}

TEST(Mesh, CoarseningMergesQuietPatches) {
  // refine everywhere, then an indicator that vanishes outside a corner
  MeshPtr fine = initial_mesh(5);
  std::vector<double> eta(fine->num_triangles(), 0.0);
  for (std::size_t t = 0; t < eta.size(); ++t) {
    const auto& tri = fine->triangles()[t];
    const Point c = fine->points()[tri[0]];
    eta[t] = (c.x < 0.2 && c.y < 0.2) ? 1.0 : 1e-6;
  }
  AdaptOptions opt;
  opt.frac_refine = 0.0;
  opt.frac_coarsen = 0.05;
  opt.min_depth = depth_of_level(3);
  AdaptStats st;
  const MeshPtr c = refine_coarsen(*fine, eta, opt, &st);
  EXPECT_GT(st.coarsened_patches, 0);
  EXPECT_LT(c->num_triangles(), fine->num_triangles());
  EXPECT_TRUE(is_conforming(*c));
  EXPECT_GE(c->min_depth(), opt.min_depth);
  EXPECT_NEAR(total_area(*c), 1.0, 1e-13);
  EXPECT_TRUE(fine->refines(*c));
}

TEST(Mesh, HMinGuardStopsRefinement) {
  MeshPtr m = initial_mesh(3);
  AdaptOptions opt;
  opt.frac_coarsen = 0.0;
  opt.h_min = 0.03;
  for (int cycle = 0; cycle < 12; ++cycle) m = refine_coarsen(*m, interface_indicator(*m, disc_field(*m, 0.3)), opt);
  EXPECT_GT(m->h_min(), opt.h_min);
  EXPECT_TRUE(is_conforming(*m));
}

TEST(Mesh, CommonRefinementRefinesBoth) {
  MeshPtr a = initial_mesh(3), b = initial_mesh(3);
  for (int i = 0; i < 3; ++i) {
    a = refine_coarsen(*a, interface_indicator(*a, disc_field(*a, 0.2)));
    b = refine_coarsen(*b, interface_indicator(*b, disc_field(*b, 0.35)));
  }
  const MeshPtr c = common_refinement(a, b);
  EXPECT_TRUE(c->refines(*a));
  EXPECT_TRUE(c->refines(*b));
  EXPECT_TRUE(is_conforming(*c));
  EXPECT_NEAR(total_area(*c), 1.0, 1e-13);
  EXPECT_EQ(common_refinement(a, a)->id(), a->id());
  EXPECT_EQ(common_refinement(c, a)->id(), c->id());
}

TEST(Mesh, InterpolationToRefinementIsExactForP1) {
  MeshPtr a = initial_mesh(3);
  for (int i = 0; i < 3; ++i) a = refine_coarsen(*a, interface_indicator(*a, disc_field(*a, 0.3)));
  const MeshPtr fine = common_refinement(a, initial_mesh(5));
  const auto P = interpolation_matrix(*a, *fine);
  // a generic P1 function on `a`: interpolated values must match the exact
  // barycentric evaluation; an affine function is reproduced exactly
  Eigen::VectorXd lin(static_cast<Eigen::Index>(a->num_vertices()));
  for (std::size_t i = 0; i < a->num_vertices(); ++i) lin[i] = 2.0 * a->points()[i].x - 3.0 * a->points()[i].y + 0.5;
  const Eigen::VectorXd out = P * lin;
  for (std::size_t i = 0; i < fine->num_vertices(); ++i) {
    EXPECT_NEAR(out[i], 2.0 * fine->points()[i].x - 3.0 * fine->points()[i].y + 0.5, 1e-14);
  }
  // rows are partitions of unity
  const Eigen::VectorXd ones = P * Eigen::VectorXd::Ones(lin.size());
  EXPECT_NEAR((ones.array() - 1.0).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(Mesh, LocateFindsContainingLeaf) {
  MeshPtr m = initial_mesh(3);
  m = refine_coarsen(*m, interface_indicator(*m, disc_field(*m, 0.3)));
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> d(0, kCoordScale);
  for (int i = 0; i < 200; ++i) {
    const IPoint p{d(rng), d(rng)};
    EXPECT_TRUE(m->elements()[m->locate(p)].contains(p));
  }
}

TEST(Mesh, RejectsBadInput) {
  const MeshPtr m = initial_mesh(2);
  EXPECT_THROW(initial_mesh(0), MeshError);
  EXPECT_THROW(refine_coarsen(*m, std::vector<double>(3, 1.0)), MeshError);
  std::vector<double> bad(m->num_triangles(), 1.0);
  bad[0] = -1.0;
  EXPECT_THROW(refine_coarsen(*m, bad), MeshError);
  EXPECT_THROW(interface_indicator(*m, std::vector<double>(2, 0.0)), MeshError);
  EXPECT_THROW(AdaptiveMesh::from_leaves({}), MeshError);
}
