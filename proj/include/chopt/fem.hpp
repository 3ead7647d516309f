#pragma once

// P1 finite elements on AdaptiveMesh: nodal fields, mass/stiffness/transport
// assembly, the lumped quartic nonlinearity and the Ginzburg-Landau energy.

#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "chopt/mesh.hpp"

namespace chopt {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Nodal coefficients of a P1 function, bound to the mesh they live on.
class FEField {
 public:
  FEField(MeshPtr mesh, Vec coeffs) : mesh_(std::move(mesh)), coeffs_(std::move(coeffs)) {
    if (!mesh_) throw MeshError("FEField: null mesh");
    if (static_cast<std::size_t>(coeffs_.size()) != mesh_->num_vertices()) {
      throw MeshError("FEField: coefficient count does not match vertex count");
    }
    if (!coeffs_.allFinite()) throw MeshError("FEField: non-finite coefficient");
  }

  static FEField constant(MeshPtr mesh, double value) {
    const auto n = static_cast<Eigen::Index>(mesh->num_vertices());
    return FEField(std::move(mesh), Vec::Constant(n, value));
  }

  template <std::invocable<Point> F>
  static FEField interpolate(MeshPtr mesh, F&& f) {
    Vec c(static_cast<Eigen::Index>(mesh->num_vertices()));
    const auto pts = mesh->points();
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = f(pts[static_cast<std::size_t>(i)]);
    return FEField(std::move(mesh), std::move(c));
  }

  const MeshPtr& mesh() const { return mesh_; }
  std::uint64_t mesh_id() const { return mesh_->id(); }
  const Vec& coeffs() const { return coeffs_; }
  Eigen::Index size() const { return coeffs_.size(); }

 private:
  MeshPtr mesh_;
  Vec coeffs_;
};

inline void require_same_mesh(const AdaptiveMesh& a, const AdaptiveMesh& b, const char* where) {
  if (a.id() != b.id()) throw MeshError(std::string(where) + ": mesh mismatch");
}

/// Nodal interpolation onto any mesh of the same hierarchy.
inline FEField transfer(const FEField& f, const MeshPtr& target) {
  if (f.mesh_id() == target->id()) return FEField(target, f.coeffs());
  const SpMat P = interpolation_matrix(*f.mesh(), *target);
  return FEField(target, P * f.coeffs());
}

/// Represents the same piecewise-linear function on a refinement of its mesh.
inline FEField prolongate(const FEField& f, const MeshPtr& target) {
  if (!target->refines(*f.mesh())) throw MeshError("prolongate: target does not refine the source mesh");
  return transfer(f, target);
}

/// Velocity with nodal components. When a stream function is attached the
/// transport assembly uses its elementwise curl, which is exactly
/// divergence-free with zero normal flux on the boundary.
struct VelocityField {
  FEField v1;
  FEField v2;
  std::optional<FEField> stream;

  const MeshPtr& mesh() const { return v1.mesh(); }

  static VelocityField zero(const MeshPtr& mesh) {
    return {FEField::constant(mesh, 0.0), FEField::constant(mesh, 0.0), FEField::constant(mesh, 0.0)};
  }

  double max_speed() const {
    return (v1.coeffs().array().square() + v2.coeffs().array().square()).sqrt().maxCoeff();
  }
};

namespace detail {

struct P1Element {
  double area;
  std::array<double, 3> gx;
  std::array<double, 3> gy;
};

inline P1Element p1_element(const AdaptiveMesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangles()[t];
  const auto pts = mesh.points();
  P1Element e{};
  e.area = mesh.areas()[t];
  for (int i = 0; i < 3; ++i) {
    const Point& pj = pts[tri[(i + 1) % 3]];
    const Point& pk = pts[tri[(i + 2) % 3]];
    e.gx[i] = (pj.y - pk.y) / (2.0 * e.area);
    e.gy[i] = (pk.x - pj.x) / (2.0 * e.area);
  }
  return e;
}

/// Assembles per-element 3x3 blocks. All operators go through here so they
/// share one sparsity pattern (every vertex pair of every triangle).
template <class ElementMatrix>
SpMat assemble(const AdaptiveMesh& mesh, ElementMatrix&& local) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.num_triangles());
  std::array<std::array<double, 3>, 3> A{};
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    local(t, A);
    const auto& tri = mesh.triangles()[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) trips.emplace_back(tri[i], tri[j], A[i][j]);
    }
  }
  const auto n = static_cast<int>(mesh.num_vertices());
  SpMat S(n, n);
  S.setFromTriplets(trips.begin(), trips.end());
  S.makeCompressed();
  return S;
}

}  // namespace detail

inline SpMat assemble_mass(const AdaptiveMesh& mesh) {
  return detail::assemble(mesh, [&](std::size_t t, auto& A) {
    const double a = mesh.areas()[t] / 12.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) A[i][j] = (i == j ? 2.0 : 1.0) * a;
    }
  });
}

inline SpMat assemble_stiffness(const AdaptiveMesh& mesh) {
  return detail::assemble(mesh, [&](std::size_t t, auto& A) {
    const auto e = detail::p1_element(mesh, t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) A[i][j] = e.area * (e.gx[i] * e.gx[j] + e.gy[i] * e.gy[j]);
    }
  });
}

/// Diagonal of the lumped mass matrix (row sums of the consistent one).
inline Vec lumped_mass(const AdaptiveMesh& mesh) {
  Vec m = Vec::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    for (int v : mesh.triangles()[t]) m[v] += mesh.areas()[t] / 3.0;
  }
  return m;
}

/// Transport matrix in skew-symmetric form:
///   C_ij = 1/2 [ (v.grad psi_j, psi_i) - (v.grad psi_i, psi_j) ],
/// integrated exactly for a piecewise-linear (or piecewise-constant) v.
inline SpMat assemble_convection(const AdaptiveMesh& mesh, const VelocityField& v) {
  require_same_mesh(mesh, *v.mesh(), "assemble_convection");
  if (v.stream) require_same_mesh(mesh, *v.stream->mesh(), "assemble_convection");
  const Vec& v1 = v.v1.coeffs();
  const Vec& v2 = v.v2.coeffs();
  return detail::assemble(mesh, [&](std::size_t t, auto& A) {
    const auto e = detail::p1_element(mesh, t);
    const auto& tri = mesh.triangles()[t];
    std::array<double, 3> vx{}, vy{};
    if (v.stream) {
      const Vec& s = v.stream->coeffs();
      double sx = 0.0, sy = 0.0;
      for (int k = 0; k < 3; ++k) {
        sx += s[tri[k]] * e.gx[k];
        sy += s[tri[k]] * e.gy[k];
      }
      vx.fill(sy);
      vy.fill(-sx);
    } else {
      for (int k = 0; k < 3; ++k) {
        vx[k] = v1[tri[k]];
        vy[k] = v2[tri[k]];
      }
    }
    // X_ij = sum_k (v_k . grad psi_j) (psi_k, psi_i)
    std::array<std::array<double, 3>, 3> X{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double mki = e.area / 12.0 * (k == i ? 2.0 : 1.0);
          s += (vx[k] * e.gx[j] + vy[k] * e.gy[j]) * mki;
        }
        X[i][j] = s;
      }
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) A[i][j] = 0.5 * (X[i][j] - X[j][i]);
    }
  });
}

/// Quartic double-well F(s) = (1 - s^2)^2 / 4 and its derivatives.
inline double double_well(double s) { return 0.25 * (1.0 - s * s) * (1.0 - s * s); }
inline double double_well_d1(double s) { return s * s * s - s; }
inline double double_well_d2(double s) { return 3.0 * s * s - 1.0; }

/// Lumped-quadrature integral of F(phi).
inline double free_energy_integral(const Vec& lumped, const Vec& phi) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < phi.size(); ++i) s += lumped[i] * double_well(phi[i]);
  return s;
}

/// Load vector of F'(phi) against the hat functions (lumped quadrature).
inline Vec nonlinear_load(const Vec& lumped, const Vec& phi) {
  return lumped.array() * (phi.array().cube() - phi.array());
}

/// Matrix of the F''(phi) weighting (lumped, hence diagonal).
inline SpMat nonlinear_jacobian(const Vec& lumped, const Vec& phi) {
  const Vec d = lumped.array() * (3.0 * phi.array().square() - 1.0);
  SpMat D(d.size(), d.size());
  D.reserve(Eigen::VectorXi::Constant(d.size(), 1));
  for (Eigen::Index i = 0; i < d.size(); ++i) D.insert(i, i) = d[i];
  D.makeCompressed();
  return D;
}

/// Mass, stiffness and lumped mass of one mesh.
struct FESpace {
  MeshPtr mesh;
  SpMat mass;
  SpMat stiffness;
  Vec lumped;

  explicit FESpace(MeshPtr m)
      : mesh(std::move(m)), mass(assemble_mass(*mesh)), stiffness(assemble_stiffness(*mesh)),
        lumped(lumped_mass(*mesh)) {}

  double l2_norm_sq(const Vec& f) const { return f.dot(mass * f); }
};

inline double ginzburg_landau_energy(const FESpace& space, const Vec& phi, double sigma, double epsilon) {
  return 0.5 * sigma * epsilon * phi.dot(space.stiffness * phi) +
         sigma / epsilon * free_energy_integral(space.lumped, phi);
}

inline double ginzburg_landau_energy(const FEField& phi, double sigma, double epsilon) {
  return ginzburg_landau_energy(FESpace(phi.mesh()), phi.coeffs(), sigma, epsilon);
}

/// Legacy VTK with any number of named nodal fields on one mesh.
inline void write_vtk(std::ostream& os, const AdaptiveMesh& mesh,
                      std::span<const std::pair<std::string, const Vec*>> fields,
                      const std::string& title = "chopt") {
  write_vtk_mesh_header(os, mesh, title);
  if (fields.empty()) return;
  os << "POINT_DATA " << mesh.num_vertices() << '\n';
  for (const auto& [name, values] : fields) {
    if (static_cast<std::size_t>(values->size()) != mesh.num_vertices()) throw MeshError("write_vtk: field size");
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < values->size(); ++i) os << (*values)[i] << '\n';
  }
}

inline void write_vtk(std::ostream& os, const FEField& f, const std::string& name) {
  const std::array<std::pair<std::string, const Vec*>, 1> fields{std::pair{name, &f.coeffs()}};
  write_vtk(os, *f.mesh(), fields);
}

/// Flat CSV dump: vertex index, x, y, value.
inline void write_field_csv(std::ostream& os, const FEField& f) {
  os << "vertex,x,y,value\n";
  os.precision(17);
  const auto pts = f.mesh()->points();
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    os << i << ',' << pts[static_cast<std::size_t>(i)].x << ',' << pts[static_cast<std::size_t>(i)].y << ','
       << f.coeffs()[i] << '\n';
  }
}

}  // namespace chopt
