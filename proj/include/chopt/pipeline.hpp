#pragma once

// Offline stage of the reduced models for a benchmark: snapshots of the
// desired trajectory (optionally plus a state trajectory), prolongation to
// the common refinement, POD basis and DEIM data, with phase timings.

#include <chrono>
#include <optional>

#include "chopt/deim.hpp"
#include "chopt/pod.hpp"
#include "chopt/rom.hpp"
#include "chopt/scenario.hpp"

namespace chopt {

struct OfflineTimings {
  double interpolation = 0.0;  // common refinement + prolongation
  double basis = 0.0;
  double deim = 0.0;
};

struct ReducedSetup {
  SnapshotSet snapshots;
  CommonSpace space;
  PODBasis basis;
  std::optional<DEIMData> deim;
  OfflineTimings timings;
  int distinct_meshes = 0;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// ell_deim <= 0 skips DEIM. extra, if given, adds its states as snapshots.
/// Both dimensions are truncated to the numerical ranks with a warning.
inline ReducedSetup build_reduced(const Benchmark& b, int ell, int ell_deim, const Trajectory* extra = nullptr) {
  using clock = std::chrono::steady_clock;
  const double dt = b.settings.params.dt;
  ReducedSetup r;
  r.snapshots = trajectory_snapshots(b.desired, dt, "desired trajectory");
  if (extra) {
    const SnapshotSet more = trajectory_snapshots(*extra, dt, "state trajectory");
    r.snapshots.fields.insert(r.snapshots.fields.end(), more.fields.begin(), more.fields.end());
    Eigen::VectorXd w(r.snapshots.weights.size() + more.weights.size());
    w << r.snapshots.weights, more.weights;
    r.snapshots.weights = w;
    r.snapshots.label += " + state trajectory";
  }
  std::set<std::uint64_t> ids;
  for (const FEField& f : r.snapshots.fields) ids.insert(f.mesh_id());
  r.distinct_meshes = static_cast<int>(ids.size());

  auto t0 = clock::now();
  r.space = build_common_space(r.snapshots);
  r.timings.interpolation = seconds_since(t0);
  t0 = clock::now();
  r.basis = compute_basis(r.space, r.snapshots.weights, ell, true);
  r.timings.basis = seconds_since(t0);
  if (ell_deim > 0) {
    t0 = clock::now();
    r.deim = build_deim(r.space, ell_deim, true);
    r.timings.deim = seconds_since(t0);
  }
  return r;
}

inline ROMOperators reduced_operators(const Benchmark& b, const ReducedSetup& r, NonlinearTreatment mode) {
  if (mode == NonlinearTreatment::deim && !r.deim) throw DEIMError("reduced_operators: no DEIM data was built");
  return build_rom(r.basis, b.shapes, b.phi0, b.target, b.settings.params, b.settings.weights, mode,
                   r.deim ? &*r.deim : nullptr);
}

}  // namespace chopt
