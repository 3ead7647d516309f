#include <gtest/gtest.h>

#include <cmath>

#include "chopt/control.hpp"

using namespace chopt;

TEST(Control, TrapezoidWeightsIntegrateLinears) {
  const Eigen::VectorXd w = trapezoid_weights(11, 0.1);
  EXPECT_NEAR(w.sum(), 1.0, 1e-15);
  ControlVector a(1, 11), b(1, 11, 1.0);
  for (int k = 0; k < 11; ++k) a(0, k) = 0.1 * k;
  EXPECT_NEAR(control_inner(a, b, w), 0.5, 1e-15);
  EXPECT_NEAR(control_norm(b, w), 1.0, 1e-15);
}

TEST(Control, ProjectionClampsComponentwise) {
  BoxBounds box{Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 0.5)};
  Eigen::MatrixXd v(2, 3);
  v << -3, 0.5, 4, -1, 0.25, 1;
  const ControlVector p = project_box(ControlVector(v), box);
  Eigen::MatrixXd expect(2, 3);
  expect << -1, 0.5, 2, 0, 0.25, 0.5;
  EXPECT_EQ(p.values(), expect);
  EXPECT_TRUE(box.admissible(p));
  EXPECT_FALSE(box.admissible(ControlVector(v)));
  EXPECT_TRUE(project_box(p, box) == p);
}

TEST(Control, ProjectionIsNonExpansive) {
  const BoxBounds box = BoxBounds::uniform(1, -5.0, 5.0);
  const Eigen::VectorXd w = trapezoid_weights(21, 0.05);
  std::srand(3);
  for (int trial = 0; trial < 20; ++trial) {
    ControlVector a(Eigen::MatrixXd::Random(1, 21) * 10.0), b(Eigen::MatrixXd::Random(1, 21) * 10.0);
    ControlVector pa = project_box(a, box), pb = project_box(b, box);
    ControlVector d(a.values() - b.values()), pd(pa.values() - pb.values());
    EXPECT_LE(control_norm(pd, w), control_norm(d, w) + 1e-14);
  }
}

TEST(Control, VortexShapeIsTangentialOnBoundary) {
  const ControlShapes shapes = ControlShapes::single_vortex();
  for (double s : {0.0, 0.3, 0.7, 1.0}) {
    EXPECT_NEAR(shapes[0].velocity({0.0, s}).x, 0.0, 1e-15);
    EXPECT_NEAR(shapes[0].velocity({1.0, s}).x, 0.0, 1e-15);
    EXPECT_NEAR(shapes[0].velocity({s, 0.0}).y, 0.0, 1e-15);
    EXPECT_NEAR(shapes[0].velocity({s, 1.0}).y, 0.0, 1e-15);
  }
  // chi = curl of the stream function
  const double h = 1e-6;
  for (Point p : {Point{0.2, 0.7}, Point{0.5, 0.5}, Point{0.9, 0.1}}) {
    const double sy = (shapes[0].stream({p.x, p.y + h}) - shapes[0].stream({p.x, p.y - h})) / (2 * h);
    const double sx = (shapes[0].stream({p.x + h, p.y}) - shapes[0].stream({p.x - h, p.y})) / (2 * h);
    EXPECT_NEAR(shapes[0].velocity(p).x, sy, 1e-8);
    EXPECT_NEAR(shapes[0].velocity(p).y, -sx, 1e-8);
  }
}

TEST(Control, ApplyBScalesShapes) {
  const MeshPtr m = initial_mesh(3);
  const ControlShapes shapes = ControlShapes::single_vortex();
  const auto chi = shapes.interpolate_all(m);
  ControlVector u(1, 4);
  u(0, 2) = -2.5;
  const VelocityField v = apply_B(u, 2, chi);
  EXPECT_LT((v.v1.coeffs() + 2.5 * chi[0].v1.coeffs()).cwiseAbs().maxCoeff(), 1e-15);
  ASSERT_TRUE(v.stream.has_value());
  EXPECT_NEAR(v.max_speed(), 2.5 * chi[0].max_speed(), 1e-14);
  EXPECT_THROW(apply_B(u, 4, chi), ControlError);
  EXPECT_THROW(apply_B(ControlVector(2, 4), 0, chi), ControlError);
}

TEST(Control, RejectsMalformedInput) {
  EXPECT_THROW(ControlVector(0, 5), ControlError);
  EXPECT_THROW(ControlVector(1, 1), ControlError);
  EXPECT_THROW(BoxBounds::uniform(1, 2.0, 1.0), ControlError);
  Eigen::MatrixXd nan = Eigen::MatrixXd::Zero(1, 3);
  nan(0, 1) = std::nan("");
  EXPECT_THROW(ControlVector{nan}, ControlError);
  const Eigen::VectorXd w = trapezoid_weights(3, 0.1);
  EXPECT_THROW(control_inner(ControlVector(1, 3), ControlVector(1, 4), w), ControlError);
}
