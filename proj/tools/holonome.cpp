// holonome: command-line front end (simulate, equilibria, manifold,
// stability, topology, check).
//
// Exit codes: 0 success, 1 `check` found a failing group, 2 configuration or
// precondition error, 3 numerical error.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "holonome/critical.hpp"
#include "holonome/errors.hpp"
#include "holonome/expr.hpp"
#include "holonome/flow.hpp"
#include "holonome/mechsys.hpp"
#include "holonome/stability.hpp"
#include "holonome/topology.hpp"

#ifndef HOLONOME_VERSION
#define HOLONOME_VERSION "dev"
#endif

using namespace holonome;
using nlohmann::json;

namespace {

struct Common {
  std::string model;
  std::vector<std::string> params;
  std::string out;
};

/// "0,pi/2,1e-3" -> vector. Entries are constant expressions.
Eigen::VectorXd parse_vector(const std::string& text, const std::string& flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(eval(parse(item, {}, {}), {}, {}));
    } catch (const Error& e) {
      throw ConfigError(flag + ": cannot read '" + item + "': " + e.what());
    }
  }
  if (v.empty()) throw ConfigError(flag + ": empty vector");
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd parse_state_part(const std::string& text, const std::string& flag, int n) {
  Eigen::VectorXd v = parse_vector(text, flag);
  if (v.size() != n)
    throw ConfigError(flag + " has " + std::to_string(v.size()) + " entries, the model has " + std::to_string(n) +
                      " coordinates");
  return v;
}

MechSystem load_model(const Common& c) {
  MechSystem sys = load_system_file(c.model);
  ParamMap overrides;
  for (const auto& p : c.params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ConfigError("--param expects name=value, got '" + p + "'");
    overrides[p.substr(0, eq)] = eval(parse(p.substr(eq + 1), {}, {}), {}, {});
  }
  return overrides.empty() ? sys : sys.with_params(overrides);
}

json params_json(const MechSystem& sys) {
  json j = json::object();
  for (std::size_t i = 0; i < sys.param_names.size(); ++i) j[sys.param_names[i]] = sys.bound[i];
  return j;
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

class Run {
 public:
  Run(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {}

  void set_model(const std::string& path, const MechSystem& sys) {
    manifest_["model_path"] = path;
    manifest_["params"] = params_json(sys);
  }
  json& manifest() { return manifest_; }

  /// Writes `content` to `path` (stdout when empty) plus `<path>.manifest.json`.
  void emit(const std::string& path, const std::string& content) {
    if (path.empty()) {
      std::cout << content;
      return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << content;
    if (!f) throw ConfigError("failed writing '" + path + "'");
    json m = manifest_;
    m["command"] = command_;
    m["argv"] = argv_;
    m["tool_version"] = HOLONOME_VERSION;
    m["output"] = path;
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream mf(path + ".manifest.json", std::ios::binary);
    mf << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json manifest_ = json::object();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------

struct SimulateArgs {
  Common c;
  std::string q, p;
  bool project_leaf = false;
  std::string method = "rk45", flow = "extension";
  double t_end = 10.0, rel_tol = 1e-9, abs_tol = 1e-12, dt = 1e-3;
  long max_steps = 10'000'000;
};

int cmd_simulate(const SimulateArgs& a, Run& run) {
  const MechSystem sys = load_model(a.c);
  run.set_model(a.c.model, sys);
  PhasePoint x0;
  x0.q = parse_state_part(a.q, "--q", sys.n);
  x0.p = a.p.empty() ? Eigen::VectorXd::Zero(sys.n) : parse_state_part(a.p, "--p", sys.n);
  if (a.project_leaf) x0 = physical_leaf_project(sys, x0);
  IntegratorOptions o;
  o.method = parse_method(a.method);
  o.t_end = a.t_end;
  o.rel_tol = a.rel_tol;
  o.abs_tol = a.abs_tol;
  o.dt = a.dt;
  o.max_steps = a.max_steps;
  Trajectory traj;
  if (a.flow == "extension") traj = simulate_extension(sys, x0, o);
  else if (a.flow == "gradient") traj = gradient_like_flow_phase(sys, x0, o);
  else throw ConfigError("--flow must be 'extension' or 'gradient'");

  std::ostringstream csv;
  write_trajectory_csv(csv, sys, traj);
  run.manifest()["seeds"] = {{"q", vec_json(x0.q)}, {"p", vec_json(x0.p)}};
  run.manifest()["summary"] = {{"samples", traj.size()}, {"rejected_steps", traj.rejected_steps}};
  run.emit(a.c.out, csv.str());
  return 0;
}

struct EquilibriaArgs {
  Common c;
  int grid = 6;
};

int cmd_equilibria(const EquilibriaArgs& a, Run& run) {
  const MechSystem sys = load_model(a.c);
  run.set_model(a.c.model, sys);
  const auto pts = find_U_critical_points(sys, a.grid);
  json list = json::array();
  for (const auto& cp : pts) {
    json j = critical_point_to_json(cp);
    j["U"] = sys.U.evaluate<double>(as_span(cp.q), sys.bound);
    list.push_back(j);
  }
  json out = {{"model", sys.name}, {"params", params_json(sys)}, {"grid", a.grid}, {"critical_points", list}};
  run.manifest()["seeds"] = {{"grid", a.grid}};
  run.emit(a.c.out, out.dump(2) + "\n");
  return 0;
}

struct ManifoldArgs {
  Common c;
  std::vector<std::string> seeds;
  int grid = 6;
  double step = 1e-2;
  long max_points = 100000;
  std::string csv;
};

int cmd_manifold(const ManifoldArgs& a, Run& run) {
  const MechSystem sys = load_model(a.c);
  run.set_model(a.c.model, sys);
  std::vector<Eigen::VectorXd> seeds;
  for (const auto& s : a.seeds) seeds.push_back(parse_state_part(s, "--seed", sys.n));
  if (seeds.empty())
    for (const auto& cp : find_U_critical_points(sys, a.grid)) seeds.push_back(cp.q);
  ContinuationOptions o;
  o.step = a.step;
  o.max_points = a.max_points;
  if (!(o.step > 0)) throw ConfigError("--step must be positive");
  const ManifoldResult res = build_critical_manifold(sys, seeds, o);

  json comps = json::array();
  for (std::size_t i = 0; i < res.components.size(); ++i)
    comps.push_back(component_to_json(sys, res.components[i], static_cast<int>(i), sys.name));
  json refined = json::array();
  for (const auto& s : res.seeds) refined.push_back(vec_json(s.q));
  json out = {{"model", sys.name}, {"params", params_json(sys)}, {"step", a.step},
              {"seeds", refined},    {"components", comps}};
  json seed_rec = json::array();
  for (const auto& s : seeds) seed_rec.push_back(vec_json(s));
  run.manifest()["seeds"] = seed_rec;
  run.emit(a.c.out, out.dump(2) + "\n");
  if (!a.csv.empty()) {
    std::ostringstream csv;
    write_components_csv(csv, sys, res.components);
    run.emit(a.csv, csv.str());
  }
  return 0;
}

struct StabilityArgs {
  Common c;
  std::string q;
  StabilityOptions o;
};

int cmd_stability(const StabilityArgs& a, Run& run) {
  const MechSystem sys = load_model(a.c);
  run.set_model(a.c.model, sys);
  const Eigen::VectorXd q = parse_state_part(a.q, "--q", sys.n);
  if (a.o.r_max < 1) throw ConfigError("--r-max must be at least 1");
  const StabilityReport rep = stability_report(sys, q, a.o);
  json out = report_to_json(rep, a.o.r_max);
  out["model"] = sys.name;
  out["params"] = params_json(sys);
  run.manifest()["seeds"] = {{"q", vec_json(q)}};
  run.emit(a.c.out, out.dump(2) + "\n");
  return 0;
}

struct TopologyArgs {
  std::string report, out;
};

int cmd_topology(const TopologyArgs& a, Run& run) {
  std::ifstream f(a.report);
  if (!f) throw ConfigError("cannot read '" + a.report + "'");
  json in;
  try {
    in = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("'" + a.report + "' is not valid JSON: " + e.what());
  }
  const json verdict = topology_verdict(parse_topology_input(in));
  run.manifest()["report_path"] = a.report;
  run.emit(a.out, verdict.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// check: projector / bracket / flag / conservation smoke suite.

struct CheckArgs {
  Common c;
  int samples = 20;
  unsigned seed = 1;
};

struct Group {
  std::string name;
  double worst = 0.0;
  double tol = 0.0;
  bool passed = true;
  json detail = json::object();
  void record(double v) {
    worst = std::max(worst, std::isfinite(v) ? v : INFINITY);
    passed = worst <= tol;
  }
};

int cmd_check(const CheckArgs& a, Run& run) {
  const MechSystem sys = load_model(a.c);
  run.set_model(a.c.model, sys);
  const int n = sys.n;
  if (a.samples < 1) throw ConfigError("--samples must be positive");
  std::mt19937 rng(a.seed);
  std::vector<PhasePoint> pts;
  for (int s = 0; s < a.samples; ++s) {
    PhasePoint x;
    x.q.resize(n);
    x.p.resize(n);
    for (int i = 0; i < n; ++i) {
      double lo = -std::numbers::pi, hi = std::numbers::pi;
      if (sys.periodic[i]) lo = 0.0, hi = 2 * std::numbers::pi;
      else if (sys.search_lower) lo = (*sys.search_lower)(i), hi = (*sys.search_upper)(i);
      x.q(i) = std::uniform_real_distribution<double>(lo, hi)(rng);
      x.p(i) = std::normal_distribution<double>()(rng);
    }
    pts.push_back(x);
  }

  Group proj{"projector", 0, 1e-10}, bracket{"bracket", 0, 1e-9}, flg{"flag", 0, 0}, cons{"conservation", 0, 1e-8};
  const Eigen::MatrixXd Om = symplectic_matrix(n);
  const Eigen::MatrixXd Om_inv = Om.inverse();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  json flag_ranks = json::array();
  for (const auto& x : pts) {
    const ExtensionAssembly e = assemble(sys, x);  // throws on a non-SPD metric
    const double sg = 1.0 + e.g.cwiseAbs().maxCoeff();
    proj.record((e.rho * e.rho - e.rho).cwiseAbs().maxCoeff());
    proj.record((e.g * e.rho - e.rho.transpose() * e.g).cwiseAbs().maxCoeff() / sg);
    proj.record((e.rho + e.rho_bar - I).cwiseAbs().maxCoeff());
    proj.record((e.piV * e.piV - e.piV).cwiseAbs().maxCoeff());
    proj.record((e.piV * Om_inv - Om_inv * e.piV.transpose()).cwiseAbs().maxCoeff());

    Eigen::VectorXd dH(2 * n);
    dH << e.dH_dq, e.dH_dp;
    const Eigen::VectorXd field = extension_field(sys, x.state());
    const double sf = 1.0 + field.cwiseAbs().maxCoeff();
    bracket.record(std::abs(v_bracket(dH, dH, e.piV, Om)));
    for (int i = 0; i < 2 * n; ++i) {
      const Eigen::VectorXd ei = Eigen::VectorXd::Unit(2 * n, i);
      const double hx = v_bracket(dH, ei, e.piV, Om);
      bracket.record(std::abs(hx + v_bracket(ei, dH, e.piV, Om)) / sf);
      bracket.record(std::abs(hx - field(i)) / sf);
    }

    const FlagReport fr = flag(distribution_fields(sys), x.q);
    flag_ranks.push_back(fr.ranks);
    if (!fr.stabilized) flg.passed = false;
  }
  // Flag structure must not change between generic sample points.
  for (const auto& r : flag_ranks)
    if (r != flag_ranks[0]) flg.passed = false;
  const FlagReport f0 = flag(distribution_fields(sys), pts[0].q);
  flg.detail = {{"ranks", f0.ranks}, {"degree", f0.degree}, {"chow", f0.chow}};

  {
    IntegratorOptions o;
    o.t_end = 1.0;
    const PhasePoint x0 = physical_leaf_project(sys, pts[0]);
    const Trajectory tr = simulate_extension(sys, x0, o);
    const auto H = tr.monitor("H");
    const double sH = 1.0 + std::abs(H.front());
    double dH = 0, horiz = 0, df = 0;
    for (std::size_t s = 0; s < tr.size(); ++s) {
      dH = std::max(dH, std::abs(H[s] - H.front()) / sH);
      horiz = std::max(horiz, tr.monitor("horiz_residual")[s]);
      for (int i = 1; i <= sys.num_constraints(); ++i) {
        const auto f = tr.monitor("f_" + std::to_string(i));
        df = std::max(df, std::abs(f[s] - f.front()));
      }
    }
    cons.record(dH);
    cons.record(horiz);
    cons.record(df);
    cons.detail = {{"H_drift", dH}, {"horiz_residual", horiz}, {"f_drift", df}, {"t_end", o.t_end}};
  }

  json groups = json::array();
  bool all = true;
  for (const Group* g : {&proj, &bracket, &flg, &cons}) {
    json j = {{"name", g->name}, {"passed", g->passed}};
    if (g->tol > 0) j["worst"] = g->worst, j["tol"] = g->tol;
    if (!g->detail.empty()) j["detail"] = g->detail;
    groups.push_back(j);
    all = all && g->passed;
  }
  json out = {{"model", sys.name}, {"params", params_json(sys)}, {"samples", a.samples}, {"all_passed", all},
              {"groups", groups}};
  run.manifest()["seeds"] = {{"rng_seed", a.seed}};
  run.emit(a.c.out, out.dump(2) + "\n");
  return all ? 0 : 1;
}

void add_common(CLI::App* sub, Common& c, bool out_required = false) {
  sub->add_option("--model", c.model, "model config file")->required()->check(CLI::ExistingFile);
  sub->add_option("--param", c.params, "parameter override name=value (repeatable)");
  auto* o = sub->add_option("--out", c.out, "output file (stdout when omitted)");
  if (out_required) o->required();
}

int report_error(const char* kind, const std::exception& e, int code) {
  json j = {{"error", {{"type", kind}, {"message", e.what()}}}};
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"holonome: non-holonomic mechanics via constrained Hamiltonian extensions"};
  app.set_version_flag("--version", HOLONOME_VERSION);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "integrate the extension flow; writes a trajectory CSV");
  add_common(s, sim.c);
  s->add_option("--q", sim.q, "initial coordinates, comma separated")->required();
  s->add_option("--p", sim.p, "initial momenta (default 0)");
  s->add_flag("--project-leaf", sim.project_leaf, "project the start onto the physical leaf f = 0");
  s->add_option("--t-end", sim.t_end, "final time")->capture_default_str();
  s->add_option("--method", sim.method, "rk45 or rk4")->capture_default_str();
  s->add_option("--flow", sim.flow, "extension or gradient (gradient-like flow on T*Q)")->capture_default_str();
  s->add_option("--rel-tol", sim.rel_tol, "rk45 relative tolerance")->capture_default_str();
  s->add_option("--abs-tol", sim.abs_tol, "rk45 absolute tolerance")->capture_default_str();
  s->add_option("--dt", sim.dt, "rk4 step")->capture_default_str();
  s->add_option("--max-steps", sim.max_steps, "step budget")->capture_default_str();

  EquilibriaArgs eq;
  auto* e = app.add_subcommand("equilibria", "critical points of U by multistart Newton; JSON");
  add_common(e, eq.c);
  e->add_option("--grid", eq.grid, "starts per coordinate")->capture_default_str();

  ManifoldArgs man;
  auto* m = app.add_subcommand("manifold", "continue components of the critical set C_Q; JSON");
  add_common(m, man.c);
  m->add_option("--seed", man.seeds, "seed point, comma separated (repeatable; default: critical points of U)");
  m->add_option("--grid", man.grid, "multistart grid when no seed is given")->capture_default_str();
  m->add_option("--step", man.step, "continuation step")->capture_default_str();
  m->add_option("--max-points", man.max_points, "point budget per component")->capture_default_str();
  m->add_option("--csv", man.csv, "also write a flat CSV of all points");

  StabilityArgs st;
  auto* t = app.add_subcommand("stability", "linearize at (q, 0), classify, scan resonances; JSON");
  add_common(t, st.c);
  t->add_option("--q", st.q, "point on C_Q, comma separated")->required();
  t->add_option("--r-max", st.o.r_max, "resonance order bound")->capture_default_str();
  t->add_option("--tol", st.o.tol, "spectral classification tolerance")->capture_default_str();
  t->add_option("--resonance-tol", st.o.resonance_tol, "small-divisor tolerance")->capture_default_str();
  t->add_option("--critical-tol", st.o.critical_tol, "max |rho^T dU| at q")->capture_default_str();

  TopologyArgs topo;
  auto* p = app.add_subcommand("topology", "Poincare-polynomial identity from declared component topology; JSON");
  p->add_option("--report", topo.report, "topology JSON")->required()->check(CLI::ExistingFile);
  p->add_option("--out", topo.out, "output file (stdout when omitted)");

  CheckArgs chk;
  auto* c = app.add_subcommand("check", "projector / bracket / flag / conservation smoke suite; JSON");
  add_common(c, chk.c);
  c->add_option("--samples", chk.samples, "random sample points")->capture_default_str();
  c->add_option("--seed", chk.seed, "RNG seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  CLI::App* used = app.get_subcommands().front();
  Run run(used->get_name(), std::vector<std::string>(argv + 1, argv + argc));
  try {
    if (used == s) return cmd_simulate(sim, run);
    if (used == e) return cmd_equilibria(eq, run);
    if (used == m) return cmd_manifold(man, run);
    if (used == t) return cmd_stability(st, run);
    if (used == p) return cmd_topology(topo, run);
    if (used == c) return cmd_check(chk, run);
  } catch (const ConfigError& ex) {
    return report_error("ConfigError", ex, 2);
  } catch (const PreconditionError& ex) {
    return report_error("PreconditionError", ex, 2);
  } catch (const ParseError& ex) {
    return report_error("ParseError", ex, 2);
  } catch (const UnknownIdentifierError& ex) {
    return report_error("UnknownIdentifierError", ex, 2);
  } catch (const NoConvergenceError& ex) {
    return report_error("NoConvergenceError", ex, 3);
  } catch (const RankError& ex) {
    return report_error("RankError", ex, 3);
  } catch (const NumericError& ex) {
    return report_error("NumericError", ex, 3);
  } catch (const DomainError& ex) {
    return report_error("DomainError", ex, 3);
  } catch (const std::exception& ex) {
    return report_error("Error", ex, 3);
  }
  return 0;
}
