#pragma once

// Time integration of the extension flow and of the two gradient-like flows,
// with conservation monitors evaluated at accepted steps.

#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "holonome/mechsys.hpp"

namespace holonome {

enum class Method { rk4, rk45 };

Method parse_method(const std::string& s);
std::string to_string(Method m);

struct IntegratorOptions {
  Method method = Method::rk45;
  double dt = 1e-3;        // rk4 step
  double h_init = 0.0;     // rk45 first step; automatic when 0
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double t_end = 1.0;
  long max_steps = 10'000'000;
  double max_dt = std::numeric_limits<double>::infinity();

  void validate() const;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<std::string> monitor_names;
  std::vector<std::vector<double>> monitors;  // one row per sample
  bool converged = false;  // early stop of a descent flow
  long rejected_steps = 0;

  std::size_t size() const { return times.size(); }
  /// Column of a named monitor; throws PreconditionError if absent.
  std::vector<double> monitor(const std::string& name) const;
};

using StateField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct IntegrationHooks {
  /// Values recorded per accepted sample (names in `monitor_names`).
  std::vector<std::string> monitor_names;
  std::function<std::vector<double>(const Eigen::VectorXd&)> monitors;
  /// Early termination: returning true marks the trajectory converged.
  std::function<bool(const Eigen::VectorXd&)> stop;
  /// Applied to states before storage only (e.g. angle wrapping).
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> store;
};

/// Integrates the autonomous system x' = field(x) from t = 0 to opts.t_end.
/// Errors: NumericError on step underflow, non-finite derivatives, or
/// max_steps exceeded.
Trajectory integrate(const StateField& field, const Eigen::VectorXd& x0, const IntegratorOptions& opts,
                     const IntegrationHooks& hooks = {});

/// Extension flow on T*Q with monitors H, L, horiz_residual, f_1..f_{n-k}.
Trajectory simulate_extension(const MechSystem& sys, const PhasePoint& x0, const IntegratorOptions& opts);

/// Hoelder DAE residuals along a stored trajectory; the maxima and the
/// per-sample values.
struct HolderSummary {
  HolderResiduals max;
  std::vector<HolderResiduals> samples;
};
HolderSummary holder_residuals(const MechSystem& sys, const Trajectory& traj);

/// q' = -rho g^-1 dU on Q. Stops (converged) once |rho^T dU| < 1e-10.
/// Monitors: U, residual.
Trajectory descent_flow_q(const MechSystem& sys, const Eigen::VectorXd& q0, const IntegratorOptions& opts);

/// x' = -pi_V g_K^-1 dH on T*Q, g_K from the compatible triple with g' = I.
/// Stops once |pi_V^T dH| < 1e-10. Monitors: H, residual.
Trajectory gradient_like_flow_phase(const MechSystem& sys, const PhasePoint& x0, const IntegratorOptions& opts);
Eigen::VectorXd gradient_like_field(const MechSystem& sys, const Eigen::VectorXd& x);

/// CSV with header t, q_1..q_n, p_1..p_n, H, L, horiz_residual, f_1..f_{n-k}.
void write_trajectory_csv(std::ostream& out, const MechSystem& sys, const Trajectory& traj);

}  // namespace holonome
