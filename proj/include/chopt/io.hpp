#pragma once

// CSV / VTK artifacts: controls, iteration histories, per-step logs, timing
// tables and persisted POD bases. Numbers are written with 17 significant
// digits so every double survives a write/read cycle exactly.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "chopt/control.hpp"
#include "chopt/fem.hpp"
#include "chopt/optimizer.hpp"
#include "chopt/pod.hpp"
#include "chopt/state_solver.hpp"

namespace chopt {

class IOError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) {
    throw IOError(where + ":" + std::to_string(line) + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw IOError("cannot open " + p.string() + " for writing");
  os << std::setprecision(17);
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IOError("cannot open " + p.string());
  return is;
}

}  // namespace detail

/// Columns t,u1..um; one row per time point.
inline void write_control_csv(std::ostream& os, const ControlVector& u, double dt) {
  os << std::setprecision(17) << 't';
  for (int i = 0; i < u.components(); ++i) os << ",u" << i + 1;
  os << '\n';
  for (int k = 0; k < u.time_points(); ++k) {
    os << k * dt;
    for (int i = 0; i < u.components(); ++i) os << ',' << u(i, k);
    os << '\n';
  }
}

inline ControlVector read_control_csv(std::istream& is, const std::string& name = "control.csv") {
  std::string line;
  if (!std::getline(is, line)) throw IOError(name + ": empty file");
  const auto header = detail::split_csv(line);
  if (header.size() < 2 || header[0] != "t") throw IOError(name + ":1: expected header t,u1,...");
  const int m = static_cast<int>(header.size()) - 1;
  std::vector<std::vector<double>> rows;
  int ln = 1;
  while (std::getline(is, line)) {
    ++ln;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (static_cast<int>(cells.size()) != m + 1) {
      throw IOError(name + ":" + std::to_string(ln) + ": expected " + std::to_string(m + 1) + " columns");
    }
    std::vector<double> r;
    for (int i = 1; i <= m; ++i) r.push_back(detail::parse_double(cells[static_cast<std::size_t>(i)], name, ln));
    rows.push_back(std::move(r));
  }
  if (rows.size() < 2) throw IOError(name + ": need at least two time points");
  Eigen::MatrixXd v(m, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (int i = 0; i < m; ++i) v(i, static_cast<Eigen::Index>(k)) = rows[k][static_cast<std::size_t>(i)];
  }
  return ControlVector(v);
}

/// k,J,gradnorm,s_k with an empty step for the final iterate.
inline void write_history_csv(std::ostream& os, const std::vector<IterationRecord>& history) {
  os << std::setprecision(17) << "k,J,gradnorm,s_k\n";
  for (const IterationRecord& r : history) {
    os << r.k << ',' << r.cost << ',' << r.grad_norm << ',';
    if (r.step) os << *r.step;
    os << '\n';
  }
}

inline void write_step_log_csv(std::ostream& os, const Trajectory& t, double dt) {
  os << std::setprecision(17) << "k,t,mass,energy,vertices,newton_iterations\n";
  for (int k = 0; k <= t.steps(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    os << k << ',' << k * dt << ',' << t.mass[ks] << ',' << t.energy[ks] << ',' << t.phi[ks].size() << ','
       << (k == 0 ? 0 : t.newton_iterations[ks - 1]) << '\n';
  }
}

struct TimingRow {
  std::string phase;
  std::string variant;
  double seconds = 0.0;
};

inline void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows) {
  os << std::setprecision(6) << "phase,variant,seconds\n";
  for (const TimingRow& r : rows) os << r.phase << ',' << r.variant << ',' << r.seconds << '\n';
}

// ---- mesh and basis persistence ----------------------------------------

/// Leaf keys (root,depth,path) fully determine an adaptive mesh.
inline void write_mesh_keys(std::ostream& os, const AdaptiveMesh& mesh) {
  os << "root,depth,path\n";
  for (const Element& e : mesh.elements()) {
    os << static_cast<int>(e.key.root) << ',' << static_cast<int>(e.key.depth) << ',' << e.key.path << '\n';
  }
}

inline MeshPtr read_mesh_keys(std::istream& is, const std::string& name = "mesh.csv") {
  std::string line;
  if (!std::getline(is, line) || line != "root,depth,path") throw IOError(name + ":1: expected header root,depth,path");
  std::vector<Element> leaves;
  int ln = 1;
  while (std::getline(is, line)) {
    ++ln;
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 3) throw IOError(name + ":" + std::to_string(ln) + ": expected 3 columns");
    ElementKey k;
    try {
      const int root = std::stoi(c[0]), depth = std::stoi(c[1]);
      if (root < 0 || root > 3 || depth < 0 || depth > kMaxDepth) throw IOError("range");
      k.root = static_cast<std::uint8_t>(root);
      k.depth = static_cast<std::uint8_t>(depth);
      k.path = std::stoull(c[2]);
    } catch (const std::exception&) {
      throw IOError(name + ":" + std::to_string(ln) + ": invalid element key");
    }
    leaves.push_back(forest_element(k));
  }
  MeshPtr m = AdaptiveMesh::from_leaves(std::move(leaves));
  if (!is_conforming(*m)) throw IOError(name + ": elements do not form a conforming mesh");
  return m;
}

/// dir/mesh.csv (leaf keys), dir/mesh.vtk (for viewing), dir/modes.csv
/// (vertices x ell), dir/eigenvalues.csv (all Gram eigenvalues).
inline void save_basis(const std::filesystem::path& dir, const PODBasis& b) {
  std::filesystem::create_directories(dir);
  {
    auto os = detail::open_out(dir / "mesh.csv");
    write_mesh_keys(os, *b.mesh);
  }
  {
    auto os = detail::open_out(dir / "mesh.vtk");
    std::vector<std::pair<std::string, const Vec*>> fields;
    std::vector<Vec> cols;
    cols.reserve(static_cast<std::size_t>(b.size()));
    for (int i = 0; i < b.size(); ++i) cols.emplace_back(b.modes.col(i));
    for (int i = 0; i < b.size(); ++i) fields.emplace_back("mode" + std::to_string(i + 1), &cols[static_cast<std::size_t>(i)]);
    write_vtk(os, *b.mesh, fields, "POD basis");
  }
  {
    auto os = detail::open_out(dir / "modes.csv");
    for (int i = 0; i < b.size(); ++i) os << (i ? "," : "") << "mode" << i + 1;
    os << '\n';
    for (Eigen::Index r = 0; r < b.modes.rows(); ++r) {
      for (Eigen::Index i = 0; i < b.modes.cols(); ++i) os << (i ? "," : "") << b.modes(r, i);
      os << '\n';
    }
  }
  {
    auto os = detail::open_out(dir / "eigenvalues.csv");
    os << "i,lambda\n";
    for (Eigen::Index i = 0; i < b.eigenvalues.size(); ++i) os << i + 1 << ',' << b.eigenvalues[i] << '\n';
  }
}

inline PODBasis load_basis(const std::filesystem::path& dir) {
  PODBasis b;
  {
    auto is = detail::open_in(dir / "mesh.csv");
    b.mesh = read_mesh_keys(is, (dir / "mesh.csv").string());
  }
  {
    const std::string name = (dir / "modes.csv").string();
    auto is = detail::open_in(dir / "modes.csv");
    std::string line;
    std::getline(is, line);
    const auto ell = static_cast<Eigen::Index>(detail::split_csv(line).size());
    const auto n = static_cast<Eigen::Index>(b.mesh->num_vertices());
    b.modes.resize(n, ell);
    Eigen::Index r = 0;
    int ln = 1;
    while (std::getline(is, line)) {
      ++ln;
      if (line.empty()) continue;
      const auto c = detail::split_csv(line);
      if (r >= n || static_cast<Eigen::Index>(c.size()) != ell) throw IOError(name + ":" + std::to_string(ln) + ": shape mismatch");
      for (Eigen::Index i = 0; i < ell; ++i) b.modes(r, i) = detail::parse_double(c[static_cast<std::size_t>(i)], name, ln);
      ++r;
    }
    if (r != n) throw IOError(name + ": expected " + std::to_string(n) + " rows");
  }
  {
    const std::string name = (dir / "eigenvalues.csv").string();
    auto is = detail::open_in(dir / "eigenvalues.csv");
    std::string line;
    std::getline(is, line);
    std::vector<double> lam;
    int ln = 1;
    while (std::getline(is, line)) {
      ++ln;
      if (line.empty()) continue;
      const auto c = detail::split_csv(line);
      if (c.size() != 2) throw IOError(name + ":" + std::to_string(ln) + ": expected 2 columns");
      lam.push_back(detail::parse_double(c[1], name, ln));
    }
    b.eigenvalues = Eigen::Map<Eigen::VectorXd>(lam.data(), static_cast<Eigen::Index>(lam.size()));
  }
  const double cutoff = b.eigenvalues.size() ? 1e-14 * b.eigenvalues[0] : 0.0;
  b.rank = 0;
  while (b.rank < b.eigenvalues.size() && b.eigenvalues[b.rank] >= cutoff && b.eigenvalues[b.rank] > 0.0) ++b.rank;
  return b;
}

/// One VTK file per selected step, named <stem>_<k>.vtk.
inline void write_trajectory_vtk(const std::filesystem::path& dir, const std::string& stem, const Trajectory& t,
                                 const std::vector<int>& steps) {
  std::filesystem::create_directories(dir);
  for (int k : steps) {
    if (k < 0 || k > t.steps()) continue;
    const auto ks = static_cast<std::size_t>(k);
    auto os = detail::open_out(dir / (stem + "_" + std::to_string(k) + ".vtk"));
    std::vector<std::pair<std::string, const Vec*>> fields{{"phi", &t.phi[ks].coeffs()}};
    if (ks < t.mu.size()) fields.emplace_back("mu", &t.mu[ks].coeffs());
    write_vtk(os, *t.phi[ks].mesh(), fields, stem + " step " + std::to_string(k));
  }
}

}  // namespace chopt
