#include "holonome/flow.hpp"

#include <algorithm>
#include <cmath>

#include "holonome/format.hpp"

namespace holonome {
namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b* (fifth minus embedded fourth order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

Eigen::VectorXd checked(const StateField& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd d = f(x);
  if (!d.allFinite()) throw NumericError("non-finite derivative in the integrated field");
  return d;
}

class Recorder {
 public:
  Recorder(Trajectory& tr, const IntegrationHooks& hooks) : tr_(tr), hooks_(hooks) {
    tr_.monitor_names = hooks.monitor_names;
  }
  void push(double t, const Eigen::VectorXd& x) {
    if (!x.allFinite()) throw NumericError("non-finite state at t = " + format_double(t));
    tr_.times.push_back(t);
    tr_.states.push_back(hooks_.store ? hooks_.store(x) : x);
    if (hooks_.monitors) tr_.monitors.push_back(hooks_.monitors(x));
  }
  bool stop(const Eigen::VectorXd& x) {
    if (hooks_.stop && hooks_.stop(x)) {
      tr_.converged = true;
      return true;
    }
    return false;
  }

 private:
  Trajectory& tr_;
  const IntegrationHooks& hooks_;
};

double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                  const IntegratorOptions& o) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = o.abs_tol + o.rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    s += (err(i) / sc) * (err(i) / sc);
  }
  return err.size() ? std::sqrt(s / static_cast<double>(err.size())) : 0.0;
}

// Starting step after Hairer, Norsett & Wanner (II.4).
double initial_step(const StateField& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& k1,
                    const IntegratorOptions& o) {
  Eigen::VectorXd sc = (o.abs_tol + o.rel_tol * x0.cwiseAbs().array()).matrix();
  const double d0 = (x0.cwiseQuotient(sc)).norm() / std::sqrt(static_cast<double>(x0.size()));
  const double d1 = (k1.cwiseQuotient(sc)).norm() / std::sqrt(static_cast<double>(x0.size()));
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, o.t_end);
  Eigen::VectorXd k2 = checked(f, x0 + h0 * k1);
  const double d2 = ((k2 - k1).cwiseQuotient(sc)).norm() / std::sqrt(static_cast<double>(x0.size())) / h0;
  const double m = std::max(d1, d2);
  const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 1.0 / 5.0);
  return std::min({100 * h0, h1, o.t_end, o.max_dt});
}

}  // namespace

Method parse_method(const std::string& s) {
  if (s == "rk4") return Method::rk4;
  if (s == "rk45") return Method::rk45;
  throw ConfigError("unknown integration method '" + s + "' (expected rk4 or rk45)");
}

std::string to_string(Method m) { return m == Method::rk4 ? "rk4" : "rk45"; }

void IntegratorOptions::validate() const {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (method == Method::rk4 && !(dt > 0.0)) throw ConfigError("dt must be positive");
  if (method == Method::rk45 && (!(rel_tol > 0.0) || !(abs_tol > 0.0)))
    throw ConfigError("tolerances must be positive");
  if (!(max_dt > 0.0)) throw ConfigError("max_dt must be positive");
}

std::vector<double> Trajectory::monitor(const std::string& name) const {
  auto it = std::find(monitor_names.begin(), monitor_names.end(), name);
  if (it == monitor_names.end()) throw PreconditionError("trajectory has no monitor '" + name + "'");
  const auto col = static_cast<std::size_t>(it - monitor_names.begin());
  std::vector<double> out;
  out.reserve(monitors.size());
  for (const auto& row : monitors) out.push_back(row[col]);
  return out;
}

Trajectory integrate(const StateField& field, const Eigen::VectorXd& x0, const IntegratorOptions& opts,
                     const IntegrationHooks& hooks) {
  opts.validate();
  Trajectory tr;
  Recorder rec(tr, hooks);
  Eigen::VectorXd x = x0;
  double t = 0.0;
  rec.push(t, x);
  if (rec.stop(x)) return tr;
  const double t_end = opts.t_end;
  const double t_scale = std::max(1.0, std::abs(t_end));
  long steps = 0;

  if (opts.method == Method::rk4) {
    while (t < t_end) {
      if (++steps > opts.max_steps) throw NumericError("max_steps exceeded");
      double h = std::min(opts.dt, t_end - t);
      if (t_end - (t + h) < 1e-12 * t_scale) h = t_end - t;
      const Eigen::VectorXd k1 = checked(field, x);
      const Eigen::VectorXd k2 = checked(field, x + 0.5 * h * k1);
      const Eigen::VectorXd k3 = checked(field, x + 0.5 * h * k2);
      const Eigen::VectorXd k4 = checked(field, x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t = (t_end - (t + h) <= 0.0) ? t_end : t + h;
      rec.push(t, x);
      if (rec.stop(x)) break;
    }
    return tr;
  }

  Eigen::VectorXd k1 = checked(field, x);
  double h = opts.h_init > 0.0 ? opts.h_init : initial_step(field, x, k1, opts);
  h = std::min(h, opts.max_dt);
  while (t < t_end) {
    if (++steps > opts.max_steps) throw NumericError("max_steps exceeded");
    bool last = false;
    if (t + h >= t_end || t_end - (t + h) < 1e-12 * t_scale) {
      h = t_end - t;
      last = true;
    }
    if (h < 1e-14 * t_scale) throw NumericError("step size underflow at t = " + format_double(t));
    const Eigen::VectorXd k2 = checked(field, x + h * (a21 * k1));
    const Eigen::VectorXd k3 = checked(field, x + h * (a31 * k1 + a32 * k2));
    const Eigen::VectorXd k4 = checked(field, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Eigen::VectorXd k5 = checked(field, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Eigen::VectorXd k6 = checked(field, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Eigen::VectorXd x5 = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Eigen::VectorXd k7 = checked(field, x5);
    const Eigen::VectorXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = error_norm(err, x, x5, opts);
    if (!std::isfinite(en)) throw NumericError("non-finite error estimate at t = " + format_double(t));
    if (en <= 1.0) {
      t = last ? t_end : t + h;
      x = x5;
      k1 = k7;  // first-same-as-last
      rec.push(t, x);
      if (rec.stop(x)) break;
      const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      h = std::min(h * fac, opts.max_dt);
    } else {
      ++tr.rejected_steps;
      h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9);
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------

Trajectory simulate_extension(const MechSystem& sys, const PhasePoint& x0, const IntegratorOptions& opts) {
  IntegrationHooks hooks;
  hooks.monitor_names = {"H", "L", "horiz_residual"};
  for (int i = 0; i < sys.num_constraints(); ++i) hooks.monitor_names.push_back("f_" + std::to_string(i + 1));
  hooks.monitors = [&sys](const Eigen::VectorXd& x) {
    const ExtensionAssembly a = assemble(sys, PhasePoint::from_state(x));
    std::vector<double> m = {a.H, a.f.squaredNorm(), (a.rho_bar * a.dH_dp).norm()};
    for (Eigen::Index i = 0; i < a.f.size(); ++i) m.push_back(a.f(i));
    return m;
  };
  hooks.store = [&sys](const Eigen::VectorXd& x) { return wrap_state(sys, x); };
  return integrate([&sys](const Eigen::VectorXd& x) { return extension_field(sys, x); }, x0.state(), opts,
                   hooks);
}

HolderSummary holder_residuals(const MechSystem& sys, const Trajectory& traj) {
  HolderSummary s;
  for (const auto& x : traj.states) {
    HolderResiduals r = holder_residuals_at(sys, x);
    s.max.velocity = std::max(s.max.velocity, r.velocity);
    s.max.force = std::max(s.max.force, r.force);
    s.max.leaf = std::max(s.max.leaf, r.leaf);
    s.samples.push_back(r);
  }
  return s;
}

Trajectory descent_flow_q(const MechSystem& sys, const Eigen::VectorXd& q0, const IntegratorOptions& opts) {
  auto residual = [&sys](const Eigen::VectorXd& q) {
    const auto r = critical_residual_t<double>(sys, as_span(q));
    return Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size())).norm();
  };
  IntegrationHooks hooks;
  hooks.monitor_names = {"U", "residual"};
  hooks.monitors = [&sys, residual](const Eigen::VectorXd& q) {
    return std::vector<double>{sys.U.evaluate<double>(as_span(q), sys.bound), residual(q)};
  };
  hooks.stop = [residual](const Eigen::VectorXd& q) { return residual(q) < 1e-10; };
  hooks.store = [&sys](const Eigen::VectorXd& q) { return wrap_coordinates(sys, q); };
  auto field = [&sys](const Eigen::VectorXd& q) -> Eigen::VectorXd {
    const auto geo = point_geometry<double>(sys, as_span(q));
    const Eigen::VectorXd dU = grad_bound(sys.U, as_span(q), sys.bound);
    return -(values(geo.rho) * (values(geo.g_inv) * dU));
  };
  return integrate(field, q0, opts, hooks);
}

Eigen::VectorXd gradient_like_field(const MechSystem& sys, const Eigen::VectorXd& x) {
  const int n = sys.n;
  const ExtensionAssembly a = assemble(sys, PhasePoint::from_state(x));
  const CompatibleTriple tr =
      compatible_triple(symplectic_matrix(n), a.piV, Eigen::MatrixXd::Identity(2 * n, 2 * n));
  Eigen::VectorXd dH(2 * n);
  dH << a.dH_dq, a.dH_dp;
  return -(a.piV * tr.g_K.llt().solve(dH));
}

Trajectory gradient_like_flow_phase(const MechSystem& sys, const PhasePoint& x0, const IntegratorOptions& opts) {
  auto residual = [&sys](const Eigen::VectorXd& x) {
    const int n = sys.n;
    const ExtensionAssembly a = assemble(sys, PhasePoint::from_state(x));
    Eigen::VectorXd dH(2 * n);
    dH << a.dH_dq, a.dH_dp;
    return (a.piV.transpose() * dH).norm();
  };
  IntegrationHooks hooks;
  hooks.monitor_names = {"H", "residual"};
  hooks.monitors = [&sys, residual](const Eigen::VectorXd& x) {
    return std::vector<double>{hamiltonian(sys, PhasePoint::from_state(x)), residual(x)};
  };
  hooks.stop = [residual](const Eigen::VectorXd& x) { return residual(x) < 1e-10; };
  hooks.store = [&sys](const Eigen::VectorXd& x) { return wrap_state(sys, x); };
  return integrate([&sys](const Eigen::VectorXd& x) { return gradient_like_field(sys, x); }, x0.state(), opts,
                   hooks);
}

void write_trajectory_csv(std::ostream& out, const MechSystem& sys, const Trajectory& traj) {
  const int n = sys.n;
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",q_" << i;
  for (int i = 1; i <= n; ++i) out << ",p_" << i;
  out << ",H,L,horiz_residual";
  for (int i = 1; i <= sys.num_constraints(); ++i) out << ",f_" << i;
  out << "\n";
  const bool have = traj.monitor_names.size() >= 3 && traj.monitor_names[0] == "H";
  for (std::size_t s = 0; s < traj.size(); ++s) {
    out << format_double(traj.times[s]);
    for (Eigen::Index i = 0; i < traj.states[s].size(); ++i) out << ',' << format_double(traj.states[s](i));
    std::vector<double> m;
    if (have) {
      m = traj.monitors[s];
    } else {
      // Recompute the standard monitors for trajectories recorded without them.
      const PhasePoint x = PhasePoint::from_state(traj.states[s]);
      const ExtensionAssembly a = assemble(sys, x);
      m = {a.H, a.f.squaredNorm(), (a.rho_bar * a.dH_dp).norm()};
      for (Eigen::Index i = 0; i < a.f.size(); ++i) m.push_back(a.f(i));
    }
    for (double v : m) out << ',' << format_double(v);
    out << "\n";
  }
}

}  // namespace holonome
