#pragma once

// Time-discrete controls, the control operator B u = sum_i u_i(t) chi_i, the
// admissible box and the discrete U_h inner product.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chopt/fem.hpp"

namespace chopt {

class ControlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// m x (N_t + 1) amplitudes u_i(t_k) on the uniform state time grid.
class ControlVector {
 public:
  ControlVector() = default;
  ControlVector(int components, int time_points, double value = 0.0)
      : values_(Eigen::MatrixXd::Constant(components, time_points, value)) {
    if (components < 1 || time_points < 2) throw ControlError("ControlVector: need m >= 1 and at least 2 time points");
  }
  explicit ControlVector(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 2) throw ControlError("ControlVector: need m >= 1 and at least 2 time points");
    if (!values_.allFinite()) throw ControlError("ControlVector: non-finite entry");
  }

  int components() const { return static_cast<int>(values_.rows()); }
  int time_points() const { return static_cast<int>(values_.cols()); }
  double operator()(int i, int k) const { return values_(i, k); }
  double& operator()(int i, int k) { return values_(i, k); }
  Eigen::VectorXd at(int k) const {
    if (k < 0 || k >= time_points()) throw ControlError("ControlVector: time index out of range");
    return values_.col(k);
  }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::MatrixXd& values() { return values_; }

  bool operator==(const ControlVector& o) const {
    return values_.rows() == o.values_.rows() && values_.cols() == o.values_.cols() && values_ == o.values_;
  }

 private:
  Eigen::MatrixXd values_;
};

/// Trapezoid weights of the uniform grid t_k = k dt, k = 0..N.
inline Eigen::VectorXd trapezoid_weights(int time_points, double dt) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(time_points, dt);
  w[0] = w[time_points - 1] = 0.5 * dt;
  return w;
}

/// U_h inner product: sum_k w_k sum_i a_i(t_k) b_i(t_k).
inline double control_inner(const ControlVector& a, const ControlVector& b, const Eigen::VectorXd& weights) {
  if (a.components() != b.components() || a.time_points() != b.time_points() ||
      a.time_points() != weights.size()) {
    throw ControlError("control_inner: shape mismatch");
  }
  return ((a.values().array() * b.values().array()).colwise().sum().transpose() * weights.array()).sum();
}

inline double control_norm(const ControlVector& g, const Eigen::VectorXd& weights) {
  return std::sqrt(control_inner(g, g, weights));
}

struct BoxBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static BoxBounds uniform(int components, double lo, double hi) {
    BoxBounds b{Eigen::VectorXd::Constant(components, lo), Eigen::VectorXd::Constant(components, hi)};
    b.validate();
    return b;
  }

  void validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) throw ControlError("BoxBounds: size mismatch");
    if ((lower.array() > upper.array()).any()) throw ControlError("BoxBounds: lower bound exceeds upper bound");
  }

  bool admissible(const ControlVector& u) const {
    for (int k = 0; k < u.time_points(); ++k) {
      for (int i = 0; i < u.components(); ++i) {
        if (u(i, k) < lower[i] || u(i, k) > upper[i]) return false;
      }
    }
    return true;
  }
};

/// Componentwise clamp onto [u_a, u_b].
inline ControlVector project_box(const ControlVector& u, const BoxBounds& b) {
  if (b.lower.size() != u.components()) throw ControlError("project_box: bounds/control size mismatch");
  ControlVector out = u;
  for (int k = 0; k < u.time_points(); ++k) {
    for (int i = 0; i < u.components(); ++i) out(i, k) = std::clamp(u(i, k), b.lower[i], b.upper[i]);
  }
  return out;
}

/// An analytically solenoidal shape chi = (d_y s, -d_x s) from a stream
/// function s vanishing on the boundary.
struct ShapeFunction {
  std::string name;
  std::function<Point(Point)> velocity;
  std::function<double(Point)> stream;
  double max_speed = 0.0;  // sup of |chi| over the closed square
};

class ControlShapes {
 public:
  ControlShapes() = default;
  explicit ControlShapes(std::vector<ShapeFunction> shapes) : shapes_(std::move(shapes)) {}

  /// chi(x) = (sin(pi x1) cos(pi x2), -sin(pi x2) cos(pi x1)).
  static ControlShapes single_vortex() {
    using std::numbers::pi;
    ShapeFunction f;
    f.name = "vortex";
    f.velocity = [](Point p) {
      return Point{std::sin(pi * p.x) * std::cos(pi * p.y), -std::sin(pi * p.y) * std::cos(pi * p.x)};
    };
    f.stream = [](Point p) { return std::sin(pi * p.x) * std::sin(pi * p.y) / pi; };
    f.max_speed = 1.0;
    return ControlShapes({f});
  }

  int size() const { return static_cast<int>(shapes_.size()); }
  const ShapeFunction& operator[](int i) const { return shapes_.at(static_cast<std::size_t>(i)); }

  VelocityField interpolate(int i, const MeshPtr& mesh) const {
    const ShapeFunction& f = (*this)[i];
    return VelocityField{FEField::interpolate(mesh, [&](Point p) { return f.velocity(p).x; }),
                         FEField::interpolate(mesh, [&](Point p) { return f.velocity(p).y; }),
                         FEField::interpolate(mesh, f.stream)};
  }

  std::vector<VelocityField> interpolate_all(const MeshPtr& mesh) const {
    std::vector<VelocityField> out;
    out.reserve(shapes_.size());
    for (int i = 0; i < size(); ++i) out.push_back(interpolate(i, mesh));
    return out;
  }

 private:
  std::vector<ShapeFunction> shapes_;
};

/// (B u)(t_k) = sum_i u_i(t_k) chi_i with the shapes already on one mesh.
inline VelocityField apply_B(const ControlVector& u, int k, std::span<const VelocityField> shapes) {
  if (k < 0 || k >= u.time_points()) throw ControlError("apply_B: time index out of range");
  if (static_cast<int>(shapes.size()) != u.components()) throw ControlError("apply_B: shape count mismatch");
  const MeshPtr& mesh = shapes.front().mesh();
  Vec v1 = Vec::Zero(static_cast<Eigen::Index>(mesh->num_vertices()));
  Vec v2 = v1, s = v1;
  bool streams = true;
  for (int i = 0; i < u.components(); ++i) {
    const VelocityField& chi = shapes[static_cast<std::size_t>(i)];
    require_same_mesh(*mesh, *chi.mesh(), "apply_B");
    v1 += u(i, k) * chi.v1.coeffs();
    v2 += u(i, k) * chi.v2.coeffs();
    if (chi.stream) {
      s += u(i, k) * chi.stream->coeffs();
    } else {
      streams = false;
    }
  }
  VelocityField v{FEField(mesh, std::move(v1)), FEField(mesh, std::move(v2)), std::nullopt};
  if (streams) v.stream = FEField(mesh, std::move(s));
  return v;
}

}  // namespace chopt
