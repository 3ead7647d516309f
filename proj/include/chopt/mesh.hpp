#pragma once

// Conforming adaptive triangulations of the unit square.
//
// Every mesh is a set of leaves of one fixed binary forest: the criss-cross
// root (four triangles meeting at the centre) refined by newest-vertex
// bisection. Vertices live on an exact dyadic integer grid, so two meshes of
// the same forest agree bit-for-bit on shared vertices and elements.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <limits>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

namespace chopt {

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integer grid resolution; the unit square maps to [0, kCoordScale]^2.
inline constexpr std::int64_t kCoordScale = std::int64_t{1} << 30;
inline constexpr int kMaxDepth = 50;
inline constexpr std::uint32_t kCrissCrossHierarchy = 1;

struct IPoint {
  std::int64_t x = 0;
  std::int64_t y = 0;
  auto operator<=>(const IPoint&) const = default;
};

struct IPointHash {
  std::size_t operator()(const IPoint& p) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(p.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(p.y) + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point to_point(const IPoint& p) {
  constexpr double inv = 1.0 / static_cast<double>(kCoordScale);
  return {static_cast<double>(p.x) * inv, static_cast<double>(p.y) * inv};
}

inline IPoint midpoint(const IPoint& a, const IPoint& b) {
  if (((a.x + b.x) & 1) != 0 || ((a.y + b.y) & 1) != 0) {
    throw MeshError("midpoint leaves the dyadic grid (refinement too deep)");
  }
  return {(a.x + b.x) / 2, (a.y + b.y) / 2};
}

/// Twice the signed area of (a, b, c); exact for grid coordinates.
inline std::int64_t orient(const IPoint& a, const IPoint& b, const IPoint& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

inline bool on_boundary(const IPoint& p) {
  return p.x == 0 || p.y == 0 || p.x == kCoordScale || p.y == kCoordScale;
}

/// Position of an element in the bisection forest.
struct ElementKey {
  std::uint8_t root = 0;
  std::uint8_t depth = 0;
  std::uint64_t path = 0;  // bit i = child taken at depth i+1

  auto operator<=>(const ElementKey&) const = default;

  ElementKey child(int which) const {
    ElementKey k = *this;
    k.path |= static_cast<std::uint64_t>(which & 1) << depth;
    k.depth = static_cast<std::uint8_t>(depth + 1);
    return k;
  }
  ElementKey parent() const {
    ElementKey k = *this;
    k.depth = static_cast<std::uint8_t>(depth - 1);
    k.path &= ~(std::uint64_t{1} << k.depth);
    return k;
  }
  ElementKey sibling() const {
    ElementKey k = *this;
    k.path ^= std::uint64_t{1} << (depth - 1);
    return k;
  }
  int last_choice() const { return static_cast<int>((path >> (depth - 1)) & 1u); }
};

struct ElementKeyHash {
  std::size_t operator()(const ElementKey& k) const noexcept {
    std::uint64_t h = k.path * 0x9E3779B97F4A7C15ull;
    h ^= (static_cast<std::uint64_t>(k.depth) << 8 | k.root) + 0x7F4A7C15ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// A triangle of the forest. v[2] is the newest vertex, v[0]-v[1] the
/// refinement edge; vertices are counter-clockwise.
struct Element {
  ElementKey key;
  std::array<IPoint, 3> v;

  std::array<Element, 2> children() const {
    const IPoint m = midpoint(v[0], v[1]);
    return {Element{key.child(0), {v[2], v[0], m}}, Element{key.child(1), {v[1], v[2], m}}};
  }

  bool contains(const IPoint& p) const {
    return orient(v[0], v[1], p) >= 0 && orient(v[1], v[2], p) >= 0 && orient(v[2], v[0], p) >= 0;
  }
};

/// Rebuilds a parent from its two children (child 0 first).
inline Element merge_siblings(const Element& c0, const Element& c1) {
  return Element{c0.key.parent(), {c0.v[1], c1.v[0], c0.v[0]}};
}

inline std::array<Element, 4> crisscross_roots() {
  const std::int64_t s = kCoordScale;
  const IPoint c{s / 2, s / 2};
  const IPoint p00{0, 0}, p10{s, 0}, p11{s, s}, p01{0, s};
  return {Element{{0, 0, 0}, {p00, p10, c}}, Element{{1, 0, 0}, {p10, p11, c}},
          Element{{2, 0, 0}, {p11, p01, c}}, Element{{3, 0, 0}, {p01, p00, c}}};
}

/// Geometry of any forest node, leaf or not.
inline Element forest_element(const ElementKey& key) {
  Element e = crisscross_roots().at(key.root);
  for (int d = 0; d < key.depth; ++d) {
    e = e.children()[(key.path >> d) & 1u];
  }
  return e;
}

class AdaptiveMesh;
using MeshPtr = std::shared_ptr<const AdaptiveMesh>;

/// Immutable conforming triangulation. Vertices are sorted by (y, x) and
/// elements by forest key, so equal leaf sets give identical meshes and ids.
class AdaptiveMesh {
 public:
  static MeshPtr from_leaves(std::vector<Element> leaves,
                             std::uint32_t hierarchy = kCrissCrossHierarchy) {
    if (leaves.empty()) throw MeshError("mesh needs at least one element");
    std::sort(leaves.begin(), leaves.end(),
              [](const Element& a, const Element& b) { return a.key < b.key; });
    auto mesh = std::shared_ptr<AdaptiveMesh>(new AdaptiveMesh());
    mesh->hierarchy_ = hierarchy;
    mesh->elements_ = std::move(leaves);
    mesh->build();
    return mesh;
  }

  std::uint64_t id() const { return id_; }
  std::uint32_t hierarchy() const { return hierarchy_; }
  std::size_t num_vertices() const { return ipoints_.size(); }
  std::size_t num_triangles() const { return elements_.size(); }

  std::span<const Point> points() const { return points_; }
  std::span<const IPoint> ipoints() const { return ipoints_; }
  std::span<const std::array<int, 3>> triangles() const { return triangles_; }
  std::span<const Element> elements() const { return elements_; }
  std::span<const double> areas() const { return areas_; }

  double h_min() const { return h_min_; }
  double h_max() const { return h_max_; }
  int max_depth() const { return max_depth_; }
  int min_depth() const { return min_depth_; }

  std::optional<int> find_vertex(const IPoint& p) const {
    auto it = vertex_index_.find(p);
    if (it == vertex_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<int> find_element(const ElementKey& k) const {
    auto it = element_index_.find(k);
    if (it == element_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Index of a leaf containing p (points on edges resolve to either side).
  int locate(const IPoint& p) const {
    const auto roots = crisscross_roots();
    const auto root = std::find_if(roots.begin(), roots.end(),
                                   [&](const Element& e) { return e.contains(p); });
    if (root == roots.end()) throw MeshError("point outside the unit square");
    Element e = *root;
    for (int d = 0; d <= kMaxDepth; ++d) {
      if (auto idx = find_element(e.key)) return *idx;
      const auto ch = e.children();
      e = ch[0].contains(p) ? ch[0] : ch[1];
    }
    throw MeshError("point location exceeded the forest depth");
  }

  /// True when every leaf of this mesh lies inside a leaf of `coarse`.
  bool refines(const AdaptiveMesh& coarse) const {
    if (coarse.hierarchy() != hierarchy_) return false;
    for (const Element& e : elements_) {
      ElementKey k = e.key;
      while (!coarse.find_element(k)) {
        if (k.depth == 0) return false;
        k = k.parent();
      }
    }
    return true;
  }

 private:
  AdaptiveMesh() = default;

  void build() {
    std::vector<IPoint> pts;
    pts.reserve(elements_.size() * 3);
    for (const Element& e : elements_) pts.insert(pts.end(), e.v.begin(), e.v.end());
    std::sort(pts.begin(), pts.end(), [](const IPoint& a, const IPoint& b) {
      return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    ipoints_ = std::move(pts);
    points_.reserve(ipoints_.size());
    vertex_index_.reserve(ipoints_.size() * 2);
    for (std::size_t i = 0; i < ipoints_.size(); ++i) {
      points_.push_back(to_point(ipoints_[i]));
      vertex_index_.emplace(ipoints_[i], static_cast<int>(i));
    }

    triangles_.reserve(elements_.size());
    areas_.reserve(elements_.size());
    element_index_.reserve(elements_.size() * 2);
    h_min_ = std::numeric_limits<double>::infinity();
    h_max_ = 0.0;
    max_depth_ = 0;
    min_depth_ = kMaxDepth;
    std::uint64_t h = 0xcbf29ce484222325ull ^ hierarchy_;
    auto mix = [&h](std::uint64_t x) {
      for (int b = 0; b < 8; ++b) {
        h ^= (x >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    };
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const Element& e = elements_[t];
      if (orient(e.v[0], e.v[1], e.v[2]) <= 0) throw MeshError("degenerate or clockwise element");
      if (!element_index_.emplace(e.key, static_cast<int>(t)).second) {
        throw MeshError("duplicate element in leaf set");
      }
      triangles_.push_back({vertex_index_.at(e.v[0]), vertex_index_.at(e.v[1]), vertex_index_.at(e.v[2])});
      const Point a = points_[triangles_.back()[0]];
      const Point b = points_[triangles_.back()[1]];
      const Point c = points_[triangles_.back()[2]];
      areas_.push_back(0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)));
      for (auto [p, q] : {std::pair{a, b}, std::pair{b, c}, std::pair{c, a}}) {
        const double len = std::hypot(p.x - q.x, p.y - q.y);
        h_min_ = std::min(h_min_, len);
        h_max_ = std::max(h_max_, len);
      }
      max_depth_ = std::max<int>(max_depth_, e.key.depth);
      min_depth_ = std::min<int>(min_depth_, e.key.depth);
      mix(e.key.root);
      mix(e.key.depth);
      mix(e.key.path);
    }
    id_ = h;
  }

  std::uint32_t hierarchy_ = kCrissCrossHierarchy;
  std::uint64_t id_ = 0;
  std::vector<Element> elements_;
  std::vector<IPoint> ipoints_;
  std::vector<Point> points_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<double> areas_;
  std::unordered_map<IPoint, int, IPointHash> vertex_index_;
  std::unordered_map<ElementKey, int, ElementKeyHash> element_index_;
  double h_min_ = 0.0;
  double h_max_ = 0.0;
  int max_depth_ = 0;
  int min_depth_ = 0;
};

namespace detail {

struct EdgeKey {
  IPoint a, b;
  EdgeKey(IPoint p, IPoint q) : a(std::min(p, q)), b(std::max(p, q)) {}
  bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& e) const noexcept {
    IPointHash h;
    return h(e.a) * 31u ^ h(e.b);
  }
};

/// Mutable leaf set used while bisecting; closes hanging nodes as it goes.
class BisectionForest {
 public:
  explicit BisectionForest(std::span<const Element> leaves) {
    for (const Element& e : leaves) add(e);
  }

  bool is_leaf(const ElementKey& k) const { return leaves_.contains(k); }
  const Element& leaf(const ElementKey& k) const { return leaves_.at(k); }

  /// Bisects `key` and every element that becomes non-conforming as a result.
  void bisect(const ElementKey& key) {
    std::vector<ElementKey> stack{key};
    bool first = true;
    while (!stack.empty()) {
      const ElementKey k = stack.back();
      stack.pop_back();
      auto it = leaves_.find(k);
      if (it == leaves_.end()) continue;
      if (!first && !hanging(it->second)) continue;
      first = false;
      split(it->second, stack);
    }
  }

  /// Bisects until no leaf has a mesh vertex in the interior of an edge.
  void close() {
    std::vector<ElementKey> pending;
    for (const auto& [k, e] : leaves_) {
      if (hanging(e)) pending.push_back(k);
    }
    std::sort(pending.begin(), pending.end());
    while (!pending.empty()) {
      const ElementKey k = pending.back();
      pending.pop_back();
      auto it = leaves_.find(k);
      if (it == leaves_.end() || !hanging(it->second)) continue;
      split(it->second, pending);
    }
  }

  std::vector<Element> leaves() const {
    std::vector<Element> out;
    out.reserve(leaves_.size());
    for (const auto& [k, e] : leaves_) out.push_back(e);
    return out;
  }

 private:
  bool hanging(const Element& e) const {
    for (int i = 0; i < 3; ++i) {
      const IPoint& p = e.v[i];
      const IPoint& q = e.v[(i + 1) % 3];
      if (((p.x + q.x) & 1) != 0 || ((p.y + q.y) & 1) != 0) continue;
      if (vertices_.contains(IPoint{(p.x + q.x) / 2, (p.y + q.y) / 2})) return true;
    }
    return false;
  }

  void split(Element e, std::vector<ElementKey>& stack) {
    if (e.key.depth >= kMaxDepth) throw MeshError("bisection depth limit reached");
    remove(e);
    const auto children = e.children();
    for (const Element& c : children) add(c);
    vertices_.insert(children[0].v[2]);
    // Neighbours across the bisected edge now carry a hanging node.
    if (auto it = edges_.find(EdgeKey(e.v[0], e.v[1])); it != edges_.end()) {
      for (const ElementKey& n : it->second) stack.push_back(n);
    }
    for (const Element& c : children) {
      if (hanging(c)) stack.push_back(c.key);
    }
  }

  void add(const Element& e) {
    leaves_.emplace(e.key, e);
    for (int i = 0; i < 3; ++i) {
      vertices_.insert(e.v[i]);
      edges_[EdgeKey(e.v[i], e.v[(i + 1) % 3])].push_back(e.key);
    }
  }

  void remove(const Element& e) {
    for (int i = 0; i < 3; ++i) {
      auto it = edges_.find(EdgeKey(e.v[i], e.v[(i + 1) % 3]));
      auto& list = it->second;
      list.erase(std::find(list.begin(), list.end(), e.key));
      if (list.empty()) edges_.erase(it);
    }
    leaves_.erase(e.key);
  }

  std::unordered_map<ElementKey, Element, ElementKeyHash> leaves_;
  std::unordered_set<IPoint, IPointHash> vertices_;
  std::unordered_map<EdgeKey, std::vector<ElementKey>, EdgeKeyHash> edges_;
};

}  // namespace detail

/// Uniform criss-cross mesh; level 1 is the four root triangles and every
/// further level bisects each triangle twice.
inline MeshPtr initial_mesh(int n_levels) {
  if (n_levels < 1) throw MeshError("initial_mesh: n_levels must be >= 1");
  const int depth = 2 * (n_levels - 1);
  if (depth > kMaxDepth) throw MeshError("initial_mesh: too many levels");
  const auto roots = crisscross_roots();
  std::vector<Element> leaves(roots.begin(), roots.end());
  for (int d = 0; d < depth; ++d) {
    std::vector<Element> next;
    next.reserve(leaves.size() * 2);
    for (const Element& e : leaves) {
      const auto ch = e.children();
      next.push_back(ch[0]);
      next.push_back(ch[1]);
    }
    leaves = std::move(next);
  }
  return AdaptiveMesh::from_leaves(std::move(leaves));
}

/// Depth (number of bisections from the root) of a uniform level.
inline int depth_of_level(int n_levels) { return 2 * (n_levels - 1); }

/// Shortest edge a triangle at `depth` has; criss-cross descendants are all
/// right isosceles with legs 2^{-(depth+1)/2}.
inline double min_edge_at_depth(int depth) { return std::pow(2.0, -0.5 * (depth + 1)); }

struct IndicatorOptions {
  double interface_threshold = 0.9;
  double flag_weight = 100.0;
};

/// Per-triangle score: area * |grad phi|^2 plus flag_weight * area on
/// triangles touching the interfacial band (|phi| < threshold or a sign
/// change between vertices).
inline std::vector<double> interface_indicator(const AdaptiveMesh& mesh, std::span<const double> phi,
                                               const IndicatorOptions& opt = {}) {
  if (phi.size() != mesh.num_vertices()) throw MeshError("interface_indicator: field/mesh size mismatch");
  std::vector<double> eta(mesh.num_triangles(), 0.0);
  const auto pts = mesh.points();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles()[t];
    const double area = mesh.areas()[t];
    const Point a = pts[tri[0]], b = pts[tri[1]], c = pts[tri[2]];
    const double f0 = phi[tri[0]], f1 = phi[tri[1]], f2 = phi[tri[2]];
    // grad of the linear interpolant
    const double gx = ((f1 - f0) * (c.y - a.y) - (f2 - f0) * (b.y - a.y)) / (2.0 * area);
    const double gy = ((f2 - f0) * (b.x - a.x) - (f1 - f0) * (c.x - a.x)) / (2.0 * area);
    double score = area * (gx * gx + gy * gy);
    const double lo = std::min({f0, f1, f2});
    const double hi = std::max({f0, f1, f2});
    const bool band = std::min({std::abs(f0), std::abs(f1), std::abs(f2)}) < opt.interface_threshold ||
                      (lo < 0.0 && hi > 0.0);
    if (band) score += opt.flag_weight * area;
    eta[t] = score;
  }
  return eta;
}

struct AdaptOptions {
  double frac_refine = 0.3;
  double frac_coarsen = 0.05;
  /// Refinement producing an edge of length <= h_min is skipped; 0 disables.
  double h_min = 0.0;
  /// Bisection depth bounds for adapted elements.
  int max_depth = kMaxDepth;
  int min_depth = 0;
};

struct AdaptStats {
  int marked = 0;
  int skipped = 0;
  int coarsened_patches = 0;
};

/// Dörfler marking on the indicator: the largest-score triangles carrying
/// frac_refine of the total are bisected twice (closure by newest-vertex
/// bisection); sibling patches whose joint score sits in the bottom
/// frac_coarsen share are merged first.
inline MeshPtr refine_coarsen(const AdaptiveMesh& mesh, std::span<const double> indicator,
                              const AdaptOptions& opt = {}, AdaptStats* stats = nullptr) {
  const std::size_t nt = mesh.num_triangles();
  if (indicator.size() != nt) throw MeshError("refine_coarsen: indicator/mesh size mismatch");
  double total = 0.0;
  for (double v : indicator) {
    if (!std::isfinite(v) || v < 0.0) throw MeshError("refine_coarsen: indicator must be finite and nonnegative");
    total += v;
  }
  AdaptStats local;
  AdaptStats& st = stats ? *stats : local;
  st = {};

  std::vector<char> marked(nt, 0);
  if (total > 0.0 && opt.frac_refine > 0.0) {
    std::vector<int> order(nt);
    for (std::size_t i = 0; i < nt; ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return indicator[a] > indicator[b]; });
    double acc = 0.0;
    for (int t : order) {
      if (acc >= opt.frac_refine * total || indicator[t] <= 0.0) break;
      marked[t] = 1;
      acc += indicator[t];
    }
  }

  // Coarsening patches: a vertex that is the newest vertex of every leaf
  // around it, with all siblings present.
  std::vector<Element> leaves(mesh.elements().begin(), mesh.elements().end());
  std::vector<char> removed(nt, 0);
  std::vector<Element> parents;
  if (total > 0.0 && opt.frac_coarsen > 0.0) {
    const std::size_t nv = mesh.num_vertices();
    std::vector<std::vector<int>> around(nv);
    for (std::size_t t = 0; t < nt; ++t) {
      for (int v : mesh.triangles()[t]) around[v].push_back(static_cast<int>(t));
    }
    struct Patch {
      double score;
      int vertex;
    };
    std::vector<Patch> patches;
    for (std::size_t v = 0; v < nv; ++v) {
      const auto& ts = around[v];
      const std::size_t want = on_boundary(mesh.ipoints()[v]) ? 2 : 4;
      if (ts.size() != want) continue;
      bool ok = true;
      double score = 0.0;
      for (int t : ts) {
        const Element& e = mesh.elements()[t];
        if (mesh.triangles()[t][2] != static_cast<int>(v) || e.key.depth <= opt.min_depth || marked[t]) {
          ok = false;
          break;
        }
        auto sib = mesh.find_element(e.key.sibling());
        if (!sib || std::find(ts.begin(), ts.end(), *sib) == ts.end()) {
          ok = false;
          break;
        }
        score += indicator[t];
      }
      if (ok) patches.push_back({score, static_cast<int>(v)});
    }
    std::stable_sort(patches.begin(), patches.end(),
                     [](const Patch& a, const Patch& b) { return a.score < b.score; });
    double acc = 0.0;
    for (const Patch& p : patches) {
      if (acc + p.score > opt.frac_coarsen * total) break;
      acc += p.score;
      ++st.coarsened_patches;
      for (int t : around[p.vertex]) {
        removed[t] = 1;
        const Element& e = mesh.elements()[t];
        if (e.key.last_choice() == 0) {
          const Element& sib = mesh.elements()[*mesh.find_element(e.key.sibling())];
          parents.push_back(merge_siblings(e, sib));
        }
      }
    }
  }

  std::vector<Element> kept;
  kept.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    if (!removed[t]) kept.push_back(leaves[t]);
  }
  kept.insert(kept.end(), parents.begin(), parents.end());
  detail::BisectionForest forest(kept);

  for (std::size_t t = 0; t < nt; ++t) {
    if (!marked[t]) continue;
    ++st.marked;
    const Element& e = leaves[t];
    const int target = e.key.depth + 2;
    std::vector<ElementKey> todo{e.key};
    while (!todo.empty()) {
      const ElementKey k = todo.back();
      todo.pop_back();
      if (k.depth >= target) continue;
      if (!forest.is_leaf(k)) {
        // already split by the closure of an earlier refinement
        todo.push_back(k.child(0));
        todo.push_back(k.child(1));
        continue;
      }
      const bool guard_ok = k.depth + 1 <= opt.max_depth &&
                            (opt.h_min <= 0.0 || min_edge_at_depth(k.depth + 1) > opt.h_min);
      if (!guard_ok) {
        ++st.skipped;
        continue;
      }
      forest.bisect(k);
      todo.push_back(k.child(0));
      todo.push_back(k.child(1));
    }
  }
  return AdaptiveMesh::from_leaves(forest.leaves(), mesh.hierarchy());
}

/// Finest-common mesh of several meshes of one hierarchy: the leaves of the
/// union of their refinement trees.
inline MeshPtr common_refinement(std::span<const MeshPtr> meshes) {
  if (meshes.empty()) throw MeshError("common_refinement: no meshes");
  const std::uint32_t hier = meshes.front()->hierarchy();
  for (const auto& m : meshes) {
    if (m->hierarchy() != hier) throw MeshError("common_refinement: incompatible hierarchies");
  }
  bool all_same = true;
  for (const auto& m : meshes) all_same = all_same && m->id() == meshes.front()->id();
  if (all_same) return meshes.front();

  std::unordered_set<ElementKey, ElementKeyHash> interior;
  std::unordered_map<ElementKey, Element, ElementKeyHash> candidates;
  for (const auto& m : meshes) {
    for (const Element& e : m->elements()) {
      candidates.emplace(e.key, e);
      ElementKey k = e.key;
      while (k.depth > 0) {
        k = k.parent();
        if (!interior.insert(k).second) break;
      }
    }
  }
  std::vector<Element> leaves;
  for (const auto& [k, e] : candidates) {
    if (!interior.contains(k)) leaves.push_back(e);
  }
  detail::BisectionForest forest(leaves);
  forest.close();
  return AdaptiveMesh::from_leaves(forest.leaves(), hier);
}

inline MeshPtr common_refinement(const MeshPtr& a, const MeshPtr& b) {
  const std::array<MeshPtr, 2> both{a, b};
  return common_refinement(std::span<const MeshPtr>(both));
}

/// Nodal interpolation of P1 functions on `from` at the vertices of `to`
/// (rows: vertices of `to`). Exact when `to` refines `from`.
inline Eigen::SparseMatrix<double> interpolation_matrix(const AdaptiveMesh& from, const AdaptiveMesh& to) {
  if (from.hierarchy() != to.hierarchy()) throw MeshError("interpolation_matrix: incompatible hierarchies");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(to.num_vertices() * 2);
  for (std::size_t i = 0; i < to.num_vertices(); ++i) {
    const IPoint p = to.ipoints()[i];
    if (auto j = from.find_vertex(p)) {
      trips.emplace_back(static_cast<int>(i), *j, 1.0);
      continue;
    }
    const int t = from.locate(p);
    const Element& e = from.elements()[t];
    const auto& tri = from.triangles()[t];
    const double total = static_cast<double>(orient(e.v[0], e.v[1], e.v[2]));
    const std::array<double, 3> w{static_cast<double>(orient(p, e.v[1], e.v[2])) / total,
                                  static_cast<double>(orient(e.v[0], p, e.v[2])) / total,
                                  static_cast<double>(orient(e.v[0], e.v[1], p)) / total};
    for (int k = 0; k < 3; ++k) {
      if (w[k] != 0.0) trips.emplace_back(static_cast<int>(i), tri[k], w[k]);
    }
  }
  Eigen::SparseMatrix<double> P(static_cast<int>(to.num_vertices()), static_cast<int>(from.num_vertices()));
  P.setFromTriplets(trips.begin(), trips.end());
  return P;
}

/// Edge census: every interior edge must be shared by exactly two triangles
/// and no vertex may sit inside another triangle's edge.
inline bool is_conforming(const AdaptiveMesh& mesh) {
  std::unordered_map<detail::EdgeKey, int, detail::EdgeKeyHash> count;
  for (const Element& e : mesh.elements()) {
    for (int i = 0; i < 3; ++i) ++count[detail::EdgeKey(e.v[i], e.v[(i + 1) % 3])];
  }
  for (const auto& [edge, n] : count) {
    const bool boundary = (edge.a.x == edge.b.x && (edge.a.x == 0 || edge.a.x == kCoordScale)) ||
                          (edge.a.y == edge.b.y && (edge.a.y == 0 || edge.a.y == kCoordScale));
    if (n != (boundary ? 1 : 2)) return false;
  }
  return true;
}

inline void write_vtk_mesh_header(std::ostream& os, const AdaptiveMesh& mesh, const std::string& title) {
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os.precision(17);
  os << "POINTS " << mesh.num_vertices() << " double\n";
  for (const Point& p : mesh.points()) os << p.x << ' ' << p.y << " 0\n";
  os << "CELLS " << mesh.num_triangles() << ' ' << 4 * mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles()) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << mesh.num_triangles() << '\n';
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) os << "5\n";
}

}  // namespace chopt
