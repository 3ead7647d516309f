// Command-line entry point: forward solves, optimization with the full or
// reduced models, offline POD/DEIM construction, timing tables and a quick
// invariant check.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "chopt/chopt.hpp"
#include "chopt/config.hpp"

namespace fs = std::filesystem;
using namespace chopt;

namespace {

// Exit codes by failure category.
enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kSolver = 3,
  kLineSearch = 4,
  kNotConverged = 5,
  kCheckFailed = 6,
};

struct Common {
  std::string config;
  std::string output;
  bool verbose = false;
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (!c.output.empty()) cfg.output_dir = c.output;
  return cfg;
}

Benchmark benchmark(const RunConfig& cfg) {
  Benchmark b = make_benchmark(cfg.bench);
  b.solver.newton = cfg.newton;
  return b;
}

std::ofstream out_file(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw IOError("cannot write " + p.string());
  return os;
}

void write_config_copy(const RunConfig& cfg) {
  auto os = out_file(fs::path(cfg.output_dir) / "config.yaml");
  os << serialize(cfg);
}

int run_forward(const RunConfig& cfg) {
  const CHParams& p = cfg.bench.params;
  const ControlShapes shapes = ControlShapes::single_vortex();
  FEField phi0 = [&] {
    if (cfg.forward.initial == InitialCondition::cross) {
      const CrossShape cross = cfg.bench.cross;
      auto profile = [cross, eps = p.epsilon](Point x) { return cross(x, eps); };
      return FEField::interpolate(resolve_initial_mesh(cfg.bench.mesh, profile), profile);
    }
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> noise(-cfg.forward.noise_amplitude, cfg.forward.noise_amplitude);
    return FEField::interpolate(initial_mesh(cfg.bench.mesh.base_level), [&](Point) { return noise(rng); });
  }();
  const ControlVector u(shapes.size(), p.time_points(), cfg.forward.control);
  BoxBounds::uniform(1, cfg.bench.u_lower, cfg.bench.u_upper);
  StateSolverOptions opt = solver_options(cfg.bench.mesh);
  opt.newton = cfg.newton;
  OperatorCache cache(shapes);
  const Trajectory t = solve_trajectory(phi0, u, cache, p, opt);

  const fs::path dir(cfg.output_dir);
  write_config_copy(cfg);
  {
    auto os = out_file(dir / "steps.csv");
    write_step_log_csv(os, t, p.dt);
  }
  {
    auto os = out_file(dir / "control.csv");
    write_control_csv(os, u, p.dt);
  }
  if (cfg.forward.vtk_every > 0) {
    std::vector<int> steps;
    for (int k = 0; k <= t.steps(); k += cfg.forward.vtk_every) steps.push_back(k);
    if (steps.back() != t.steps()) steps.push_back(t.steps());
    write_trajectory_vtk(dir / "vtk", "phi", t, steps);
  }
  double drift = 0.0;
  for (double m : t.mass) drift = std::max(drift, std::abs(m - t.mass.front()));
  std::cout << "steps " << t.steps() << ", final vertices " << t.phi.back().size() << ", max mass drift " << drift
            << ", max CFL " << t.max_cfl << "\nwrote " << dir.string() << '\n';
  return kOk;
}

int status_code(OptimizerStatus s) {
  switch (s) {
    case OptimizerStatus::converged:
    case OptimizerStatus::stationary: return kOk;
    case OptimizerStatus::line_search_failed: return kLineSearch;
    case OptimizerStatus::max_iterations: return kNotConverged;
  }
  return kInternal;
}

void save_deim(const fs::path& dir, const DEIMData& d) {
  auto os = out_file(dir / "deim.csv");
  os << std::setprecision(17) << "index";
  for (Eigen::Index j = 0; j < d.U.cols(); ++j) os << ",u" << j + 1;
  os << '\n';
  // one row per vertex; the index column marks the sampled vertices by
  // their selection order (0 = not sampled)
  std::vector<int> order(static_cast<std::size_t>(d.U.rows()), 0);
  for (std::size_t i = 0; i < d.indices.size(); ++i) order[static_cast<std::size_t>(d.indices[i])] = static_cast<int>(i) + 1;
  for (Eigen::Index r = 0; r < d.U.rows(); ++r) {
    os << order[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < d.U.cols(); ++j) os << ',' << d.U(r, j);
    os << '\n';
  }
}

DEIMData load_deim(const fs::path& dir) {
  std::ifstream is(dir / "deim.csv");
  if (!is) throw IOError("cannot open " + (dir / "deim.csv").string());
  std::string line;
  std::getline(is, line);
  const auto cols = static_cast<Eigen::Index>(detail::split_csv(line).size()) - 1;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<int, int>> sel;
  int ln = 1;
  while (std::getline(is, line)) {
    ++ln;
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (static_cast<Eigen::Index>(c.size()) != cols + 1) throw IOError("deim.csv:" + std::to_string(ln) + ": shape mismatch");
    const int o = std::stoi(c[0]);
    if (o > 0) sel.emplace_back(o, static_cast<int>(rows.size()));
    std::vector<double> r;
    for (Eigen::Index j = 1; j <= cols; ++j) r.push_back(detail::parse_double(c[static_cast<std::size_t>(j)], "deim.csv", ln));
    rows.push_back(std::move(r));
  }
  DEIMData d;
  d.U.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index j = 0; j < cols; ++j) d.U(static_cast<Eigen::Index>(r), j) = rows[r][static_cast<std::size_t>(j)];
  }
  std::sort(sel.begin(), sel.end());
  for (const auto& [o, r] : sel) d.indices.push_back(r);
  if (static_cast<Eigen::Index>(d.indices.size()) != cols) throw IOError("deim.csv: sampled index count mismatch");
  return d;
}

ReducedSetup offline(const Benchmark& b, const RunConfig& cfg, const std::string& basis_dir) {
  if (!basis_dir.empty()) {
    ReducedSetup r;
    r.basis = load_basis(basis_dir);
    if (r.basis.size() > cfg.pod.ell) r.basis.modes.conservativeResize(Eigen::NoChange, cfg.pod.ell);
    if (fs::exists(fs::path(basis_dir) / "deim.csv")) r.deim = load_deim(basis_dir);
    return r;
  }
  std::optional<Trajectory> extra;
  if (cfg.pod.snapshots == SnapshotSource::desired_and_state) {
    OperatorCache cache(b.shapes);
    extra = solve_trajectory(b.phi0, b.zero_control(), cache, b.settings.params, b.solver);
  }
  return build_reduced(b, cfg.pod.ell, cfg.pod.ell_deim, extra ? &*extra : nullptr);
}

int run_optimize(const RunConfig& cfg, const std::string& model, const std::string& basis_dir) {
  const Benchmark b = benchmark(cfg);
  const fs::path dir(cfg.output_dir);
  write_config_copy(cfg);
  FullOrderModel fom = b.full_model();
  OptimizationResult res;
  std::optional<ReducedOrderModel> rom;
  const auto t0 = std::chrono::steady_clock::now();
  if (model == "fom") {
    res = projected_gradient(b.zero_control(), fom, b.box, cfg.optimizer);
  } else {
    const ReducedSetup r = offline(b, cfg, basis_dir);
    const auto mode = model == "rom" ? NonlinearTreatment::exact : NonlinearTreatment::deim;
    rom.emplace(reduced_operators(b, r, mode), cfg.newton);
    res = projected_gradient(b.zero_control(), *rom, b.box, cfg.optimizer);
  }
  const double elapsed = seconds_since(t0);
  {
    auto os = out_file(dir / "history.csv");
    write_history_csv(os, res.history);
  }
  {
    auto os = out_file(dir / "control.csv");
    write_control_csv(os, res.u, b.settings.params.dt);
  }
  const Trajectory& opt_traj = fom.trajectory(res.u);
  write_trajectory_vtk(dir / "vtk", "phi", opt_traj, {0, opt_traj.steps() / 2, opt_traj.steps()});
  {
    auto os = out_file(dir / "summary.csv");
    os << std::setprecision(17) << "key,value\nmodel," << model << "\nstatus," << to_string(res.status)
       << "\niterations," << res.history.size() - 1 << "\ncost," << res.cost << "\nfull_cost," << fom.evaluate_cost(res.u)
       << "\nseconds," << elapsed << '\n';
  }
  std::cout << "k        J                  |g|              s_k\n";
  for (const IterationRecord& h : res.history) {
    std::cout << h.k << "  " << h.cost << "  " << h.grad_norm << "  " << (h.step ? std::to_string(*h.step) : "") << '\n';
  }
  std::cout << "status " << to_string(res.status) << ", J(u) " << res.cost;
  if (model != "fom") std::cout << ", full-order J(u) " << fom.evaluate_cost(res.u);
  std::cout << "\nwrote " << dir.string() << '\n';
  return status_code(res.status);
}

int run_pod_build(const RunConfig& cfg) {
  const Benchmark b = benchmark(cfg);
  const ReducedSetup r = offline(b, cfg, "");
  const fs::path dir = fs::path(cfg.output_dir) / "basis";
  save_basis(dir, r.basis);
  if (r.deim) save_deim(dir, *r.deim);
  std::cout << r.snapshots.fields.size() << " snapshots on " << r.distinct_meshes << " meshes, common space "
            << r.space.mesh->num_vertices() << " vertices, rank " << r.basis.rank << ", ell " << r.basis.size()
            << ", relative tail " << r.basis.tail(r.basis.size()) / r.basis.total() << "\ntimings: interpolation "
            << r.timings.interpolation << " s, basis " << r.timings.basis << " s, DEIM " << r.timings.deim
            << " s\nwrote " << dir.string() << '\n';
  return kOk;
}

template <class F>
double median_time(F&& f, int repeats = 3) {
  std::vector<double> t;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

int run_benchmark(const RunConfig& cfg, bool with_optimization) {
  std::vector<TimingRow> rows;
  auto fe_rows = [&](const std::string& variant, RunConfig c) {
    Benchmark b = benchmark(c);
    FullOrderModel m = b.full_model();
    const ControlVector u = b.desired_control();
    rows.push_back({"state_solve", variant, median_time([&] {
                      OperatorCache cache(b.shapes);
                      solve_trajectory(b.phi0, u, cache, b.settings.params, b.solver);
                    })});
    const Trajectory& t = m.trajectory(u);
    MeshPairDistance dist;
    std::vector<Vec> d_phi;
    evaluate_cost(t, u, b.target, b.settings.weights, b.settings.params, dist, &d_phi);
    rows.push_back({"adjoint_solve", variant,
                    median_time([&] { solve_adjoint(t, u, d_phi, b.settings.params); })});
    if (with_optimization) {
      const auto t0 = std::chrono::steady_clock::now();
      FullOrderModel fresh = b.full_model();
      projected_gradient(b.zero_control(), fresh, b.box, c.optimizer);
      rows.push_back({"optimization", variant, seconds_since(t0)});
    }
    return b;
  };
  RunConfig uniform = cfg;
  uniform.bench.mesh.adaptive = false;
  uniform.bench.mesh.base_level = cfg.bench.mesh.max_level;
  fe_rows("uniform_fe", uniform);
  RunConfig adaptive = cfg;
  adaptive.bench.mesh.adaptive = true;
  const Benchmark b = fe_rows("adaptive_fe", adaptive);

  const ReducedSetup r = build_reduced(b, cfg.pod.ell, cfg.pod.ell_deim);
  rows.push_back({"offline_interpolation", "pod", r.timings.interpolation});
  rows.push_back({"offline_basis", "pod", r.timings.basis});
  rows.push_back({"offline_deim", "pod_deim", r.timings.deim});
  for (const auto& [variant, mode] : {std::pair{std::string("pod"), NonlinearTreatment::exact},
                                      std::pair{std::string("pod_deim"), NonlinearTreatment::deim}}) {
    ReducedOrderModel m(reduced_operators(b, r, mode), cfg.newton);
    const ControlVector u = b.desired_control();
    const ROMTrajectory t = rom_solve(u, m.operators(), cfg.newton);
    rows.push_back({"state_solve", variant, median_time([&] { rom_solve(u, m.operators(), cfg.newton); })});
    rows.push_back({"adjoint_solve", variant, median_time([&] { rom_gradient(u, t, m.operators()); })});
    if (with_optimization) {
      const auto t0 = std::chrono::steady_clock::now();
      ReducedOrderModel fresh(reduced_operators(b, r, mode), cfg.newton);
      projected_gradient(b.zero_control(), fresh, b.box, cfg.optimizer);
      rows.push_back({"optimization", variant, seconds_since(t0)});
    }
  }
  const fs::path dir(cfg.output_dir);
  write_config_copy(cfg);
  auto os = out_file(dir / "timings.csv");
  write_timing_csv(os, rows);
  write_timing_csv(std::cout, rows);
  std::cout << "common space " << r.space.mesh->num_vertices() << " vertices from " << r.distinct_meshes
            << " meshes\nwrote " << (dir / "timings.csv").string() << '\n';
  return kOk;
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

/// Small-scale version of the invariant suite.
int run_check(const RunConfig& cfg) {
  int failed = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    if (!ok) ++failed;
  };
  CHParams p = cfg.bench.params;
  p.end_time = 40 * p.dt;
  const ControlShapes shapes = ControlShapes::single_vortex();
  OperatorCache cache(shapes);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> noise(-0.5, 0.5), ctl(cfg.bench.u_lower, cfg.bench.u_upper);

  const MeshPtr m = initial_mesh(4);
  const FEField phi0 = FEField::interpolate(m, [&](Point) { return noise(rng); });
  ControlVector u(1, p.time_points());
  for (int k = 0; k < p.time_points(); ++k) u(0, k) = ctl(rng);
  const Trajectory t = solve_trajectory(phi0, u, cache, p);
  double drift = 0.0;
  for (double mass : t.mass) drift = std::max(drift, std::abs(mass - t.mass.front()));
  report("mass", drift <= 1e-10, "max drift " + sci(drift));

  const Trajectory t0 = solve_trajectory(phi0, ControlVector(1, p.time_points(), 0.0), cache, p);
  double rise = -1e300;
  for (std::size_t k = 1; k < t0.energy.size(); ++k) rise = std::max(rise, t0.energy[k] - t0.energy[k - 1]);
  report("energy", rise <= 1e-10, "max increase " + sci(rise));

  BenchmarkSettings s = cfg.bench;
  s.params.end_time = 20 * s.params.dt;
  s.mesh.base_level = 4;
  s.mesh.adaptive = false;
  const Benchmark b = make_benchmark(s);
  FullOrderModel f = b.full_model();
  ControlVector v(1, 21);
  for (int k = 0; k < 21; ++k) v(0, k) = ctl(rng);
  ControlVector h(1, 21);
  for (int k = 0; k < 21; ++k) h(0, k) = noise(rng);
  const double tau = 1e-3;
  const double fd = (f.evaluate_cost(ControlVector(Eigen::MatrixXd(v.values() + tau * h.values()))) -
                     f.evaluate_cost(ControlVector(Eigen::MatrixXd(v.values() - tau * h.values())))) /
                    (2 * tau);
  const double an = control_inner(f.evaluate_gradient(v), h, f.time_weights());
  const double rel = std::abs(an - fd) / std::abs(fd);
  report("gradient", rel <= 1e-5, "relative error " + sci(rel));

  const ReducedSetup r = build_reduced(b, 1, 0);
  const ProjectionError e = projection_error(r.space, r.snapshots.weights, r.basis);
  const double id = std::abs(e.direct - e.tail) / e.tail;
  report("pod_identity", id <= 1e-10, "relative mismatch " + sci(id));
  return failed ? kCheckFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal control of convective Cahn-Hilliard flow with adaptive FE and POD/DEIM reduced models"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  Common common;
  app.add_option("-c,--config", common.config, "YAML configuration file")->check(CLI::ExistingFile);
  app.add_option("-o,--output", common.output, "output directory (overrides output_dir)");
  app.add_flag("-v,--verbose", common.verbose, "log solver progress");

  CLI::App* forward = app.add_subcommand("forward", "solve the state equation with a constant control");
  CLI::App* optimize = app.add_subcommand("optimize", "projected gradient optimization");
  std::string model = "fom", basis_dir;
  optimize->add_option("--model", model, "fom, rom or rom-deim")->check(CLI::IsMember({"fom", "rom", "rom-deim"}));
  optimize->add_option("--basis", basis_dir, "directory written by pod-build (otherwise built in-run)")
      ->check(CLI::ExistingDirectory);
  CLI::App* pod = app.add_subcommand("pod-build", "build and save the POD basis and DEIM data");
  CLI::App* bench = app.add_subcommand("benchmark", "timing table for FE, POD and POD-DEIM");
  bool with_opt = false;
  bench->add_flag("--with-optimization", with_opt, "also time complete optimizations");
  CLI::App* check = app.add_subcommand("check", "run the quick invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  if (const char* threads = std::getenv("CHOPT_THREADS"); threads && std::atoi(threads) > 1) {
    log_warn("CHOPT_THREADS > 1 requested, but this build runs single-threaded");
  }
  if (common.verbose) log_level() = LogLevel::info;

  try {
    const RunConfig cfg = load(common);
    if (forward->parsed()) return run_forward(cfg);
    if (optimize->parsed()) return run_optimize(cfg, model, basis_dir);
    if (pod->parsed()) return run_pod_build(cfg);
    if (bench->parsed()) return run_benchmark(cfg, with_opt);
    if (check->parsed()) return run_check(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const ControlError& e) {
    std::cerr << "invalid control setup: " << e.what() << '\n';
    return kUsage;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
