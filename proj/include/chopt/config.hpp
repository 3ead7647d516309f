#pragma once

// Run configuration: a YAML file overriding the benchmark defaults. Unknown
// keys, wrong types and out-of-range values are rejected with the line of
// the offending entry. Requires yaml-cpp (only the command-line tool and its
// tests link it).

#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>

#include <yaml-cpp/yaml.h>

#include "chopt/optimizer.hpp"
#include "chopt/scenario.hpp"

namespace chopt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SnapshotSource { desired, desired_and_state };

struct PODSettings {
  int ell = 20;
  int ell_deim = 40;
  SnapshotSource snapshots = SnapshotSource::desired;
};

enum class InitialCondition { cross, noise };

struct ForwardSettings {
  InitialCondition initial = InitialCondition::cross;
  double noise_amplitude = 0.05;
  double control = 0.0;  // constant control value
  int vtk_every = 250;   // 0 disables VTK output
};

struct RunConfig {
  BenchmarkSettings bench;
  NewtonOptions newton;
  OptimizerOptions optimizer;
  PODSettings pod;
  ForwardSettings forward;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  void validate() const {
    bench.params.validate();
    bench.weights.validate();
    BoxBounds::uniform(1, bench.u_lower, bench.u_upper);
    if (bench.u_desired < bench.u_lower || bench.u_desired > bench.u_upper) {
      throw ConfigError("target.u_desired must lie within the control bounds");
    }
    const MeshSettings& m = bench.mesh;
    if (m.base_level < 1 || m.min_level < 1 || m.max_level < m.min_level || m.max_level > 12) {
      throw ConfigError("mesh: need 1 <= min_level <= max_level <= 12 and base_level >= 1");
    }
    if (m.cadence < 1) throw ConfigError("mesh.cadence must be >= 1");
    if (pod.ell < 1 || pod.ell_deim < 1) throw ConfigError("pod: ell and ell_deim must be >= 1");
    if (optimizer.max_iter < 0 || optimizer.armijo.shrink <= 0 || optimizer.armijo.shrink >= 1) {
      throw ConfigError("optimizer: need max_iter >= 0 and 0 < shrink < 1");
    }
  }
};

namespace detail {

inline std::string where(const YAML::Node& n) {
  return "line " + std::to_string(n.Mark().line + 1);
}

template <class T>
T as(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(n) + ": '" + key + "' has the wrong type");
  }
}

/// Reads the keys of a mapping into the given setters; rejects unknown keys.
class Section {
 public:
  Section(const YAML::Node& node, std::string name)
      : node_(node), present_(node.IsDefined() && !node.IsNull()), name_(std::move(name)) {
    if (present_ && !node_.IsMap()) throw ConfigError(where(node_) + ": '" + name_ + "' must be a mapping");
  }

  template <class T>
  Section& read(const std::string& key, T& out) {
    known_.insert(key);
    if (!present_) return *this;
    const YAML::Node v = get(key);
    if (v.IsDefined() && !v.IsNull()) out = as<T>(v, full(key));
    return *this;
  }

  template <class T, class Check>
  Section& read(const std::string& key, T& out, Check&& ok, const char* requirement) {
    read(key, out);
    if (present_ && get(key).IsDefined() && !ok(out)) {
      throw ConfigError(where(get(key)) + ": '" + full(key) + "' " + requirement);
    }
    return *this;
  }

  YAML::Node child(const std::string& key) {
    known_.insert(key);
    return present_ ? get(key) : YAML::Node(YAML::NodeType::Undefined);
  }

  void finish() const {
    if (!present_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!known_.count(key)) throw ConfigError(where(kv.first) + ": unknown key '" + full(key) + "'");
    }
  }

 private:
  std::string full(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  // const access never inserts keys into the document
  YAML::Node get(const std::string& key) const {
    const YAML::Node& n = node_;
    return n[key];
  }

  YAML::Node node_;
  bool present_ = false;
  std::string name_;
  std::set<std::string> known_;
};

inline auto positive() {
  return [](double v) { return v > 0.0; };
}
inline auto nonnegative() {
  return [](double v) { return v >= 0.0; };
}

}  // namespace detail

inline RunConfig parse_config(const YAML::Node& root) {
  using detail::Section;
  RunConfig c;
  if (root.IsDefined() && !root.IsNull() && !root.IsMap()) {
    throw ConfigError(detail::where(root) + ": top level must be a mapping");
  }
  Section s(root, "");

  CHParams& p = c.bench.params;
  Section(s.child("params"), "params")
      .read("mobility", p.mobility, detail::positive(), "must be positive")
      .read("sigma", p.sigma, detail::positive(), "must be positive")
      .read("epsilon", p.epsilon, detail::positive(), "must be positive")
      .read("dt", p.dt, detail::positive(), "must be positive")
      .read("end_time", p.end_time, detail::positive(), "must be positive")
      .finish();

  CostWeights& w = c.bench.weights;
  Section(s.child("weights"), "weights")
      .read("beta1", w.beta1, detail::nonnegative(), "must be >= 0")
      .read("beta2", w.beta2, detail::nonnegative(), "must be >= 0")
      .read("gamma", w.gamma, detail::positive(), "must be positive")
      .finish();

  Section(s.child("bounds"), "bounds").read("lower", c.bench.u_lower).read("upper", c.bench.u_upper).finish();

  {
    Section t(s.child("target"), "target");
    t.read("u_desired", c.bench.u_desired);
    const YAML::Node cross = t.child("cross");
    Section x(cross, "target.cross");
    std::vector<double> center{c.bench.cross.center.x, c.bench.cross.center.y};
    x.read("center", center)
        .read("arm_x", c.bench.cross.arm_x, detail::positive(), "must be positive")
        .read("arm_y", c.bench.cross.arm_y, detail::positive(), "must be positive")
        .read("width", c.bench.cross.width, detail::positive(), "must be positive")
        .finish();
    if (center.size() != 2) throw ConfigError(detail::where(cross) + ": 'target.cross.center' needs 2 values");
    c.bench.cross.center = {center[0], center[1]};
    t.finish();
  }

  {
    MeshSettings& m = c.bench.mesh;
    auto level = [](int v) { return v >= 1 && v <= 12; };
    Section(s.child("mesh"), "mesh")
        .read("base_level", m.base_level, level, "must be in [1, 12]")
        .read("adaptive", m.adaptive)
        .read("max_level", m.max_level, level, "must be in [1, 12]")
        .read("min_level", m.min_level, level, "must be in [1, 12]")
        .read("initial_cycles", m.initial_cycles, [](int v) { return v >= 0; }, "must be >= 0")
        .read("cadence", m.cadence, [](int v) { return v >= 1; }, "must be >= 1")
        .read("frac_refine", m.adapt.frac_refine, [](double v) { return v >= 0 && v <= 1; }, "must be in [0, 1]")
        .read("frac_coarsen", m.adapt.frac_coarsen, [](double v) { return v >= 0 && v <= 1; }, "must be in [0, 1]")
        .read("h_min", m.adapt.h_min, detail::nonnegative(), "must be >= 0")
        .finish();
  }

  Section(s.child("newton"), "newton")
      .read("abs_tol", c.newton.abs_tol, detail::positive(), "must be positive")
      .read("rel_tol", c.newton.rel_tol, detail::positive(), "must be positive")
      .read("max_iter", c.newton.max_iter, [](int v) { return v >= 1; }, "must be >= 1")
      .finish();

  Section(s.child("optimizer"), "optimizer")
      .read("max_iter", c.optimizer.max_iter, [](int v) { return v >= 0; }, "must be >= 0")
      .read("rel_tol", c.optimizer.rel_tol, detail::nonnegative(), "must be >= 0")
      .read("abs_tol", c.optimizer.abs_tol, detail::nonnegative(), "must be >= 0")
      .read("s_init", c.optimizer.armijo.s_init, detail::positive(), "must be positive")
      .read("shrink", c.optimizer.armijo.shrink, [](double v) { return v > 0 && v < 1; }, "must be in (0, 1)")
      .read("c_armijo", c.optimizer.armijo.c_armijo, detail::nonnegative(), "must be >= 0")
      .finish();

  {
    Section ps(s.child("pod"), "pod");
    std::string source = "desired";
    ps.read("ell", c.pod.ell, [](int v) { return v >= 1; }, "must be >= 1")
        .read("ell_deim", c.pod.ell_deim, [](int v) { return v >= 1; }, "must be >= 1")
        .read("snapshots", source, [](const std::string& v) { return v == "desired" || v == "desired+state"; },
              "must be 'desired' or 'desired+state'")
        .finish();
    c.pod.snapshots = source == "desired" ? SnapshotSource::desired : SnapshotSource::desired_and_state;
  }

  {
    Section fs(s.child("forward"), "forward");
    std::string initial = "cross";
    fs.read("initial", initial, [](const std::string& v) { return v == "cross" || v == "noise"; },
            "must be 'cross' or 'noise'")
        .read("noise_amplitude", c.forward.noise_amplitude, detail::nonnegative(), "must be >= 0")
        .read("control", c.forward.control)
        .read("vtk_every", c.forward.vtk_every, [](int v) { return v >= 0; }, "must be >= 0")
        .finish();
    c.forward.initial = initial == "cross" ? InitialCondition::cross : InitialCondition::noise;
  }

  s.read("output_dir", c.output_dir).read("seed", c.seed).finish();
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_config_string(const std::string& text) {
  try {
    return parse_config(YAML::Load(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
}

inline RunConfig load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot open config file " + path);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path + ": line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  try {
    return parse_config(root);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Full config as YAML; parse_config(serialize(c)) reproduces c exactly.
inline std::string serialize(const RunConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  const CHParams& p = c.bench.params;
  const MeshSettings& m = c.bench.mesh;
  os << "params:\n  mobility: " << p.mobility << "\n  sigma: " << p.sigma << "\n  epsilon: " << p.epsilon
     << "\n  dt: " << p.dt << "\n  end_time: " << p.end_time << '\n';
  os << "weights:\n  beta1: " << c.bench.weights.beta1 << "\n  beta2: " << c.bench.weights.beta2
     << "\n  gamma: " << c.bench.weights.gamma << '\n';
  os << "bounds:\n  lower: " << c.bench.u_lower << "\n  upper: " << c.bench.u_upper << '\n';
  os << "target:\n  u_desired: " << c.bench.u_desired << "\n  cross:\n    center: [" << c.bench.cross.center.x << ", "
     << c.bench.cross.center.y << "]\n    arm_x: " << c.bench.cross.arm_x << "\n    arm_y: " << c.bench.cross.arm_y
     << "\n    width: " << c.bench.cross.width << '\n';
  os << "mesh:\n  base_level: " << m.base_level << "\n  adaptive: " << (m.adaptive ? "true" : "false")
     << "\n  max_level: " << m.max_level << "\n  min_level: " << m.min_level << "\n  initial_cycles: " << m.initial_cycles
     << "\n  cadence: " << m.cadence << "\n  frac_refine: " << m.adapt.frac_refine
     << "\n  frac_coarsen: " << m.adapt.frac_coarsen << "\n  h_min: " << m.adapt.h_min << '\n';
  os << "newton:\n  abs_tol: " << c.newton.abs_tol << "\n  rel_tol: " << c.newton.rel_tol
     << "\n  max_iter: " << c.newton.max_iter << '\n';
  os << "optimizer:\n  max_iter: " << c.optimizer.max_iter << "\n  rel_tol: " << c.optimizer.rel_tol
     << "\n  abs_tol: " << c.optimizer.abs_tol << "\n  s_init: " << c.optimizer.armijo.s_init
     << "\n  shrink: " << c.optimizer.armijo.shrink << "\n  c_armijo: " << c.optimizer.armijo.c_armijo << '\n';
  os << "pod:\n  ell: " << c.pod.ell << "\n  ell_deim: " << c.pod.ell_deim << "\n  snapshots: "
     << (c.pod.snapshots == SnapshotSource::desired ? "desired" : "desired+state") << '\n';
  os << "forward:\n  initial: " << (c.forward.initial == InitialCondition::cross ? "cross" : "noise")
     << "\n  noise_amplitude: " << c.forward.noise_amplitude << "\n  control: " << c.forward.control
     << "\n  vtk_every: " << c.forward.vtk_every << '\n';
  os << "output_dir: \"" << c.output_dir << "\"\nseed: " << c.seed << '\n';
  return os.str();
}

}  // namespace chopt
