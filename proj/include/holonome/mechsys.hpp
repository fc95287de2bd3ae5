#pragma once

// A non-holonomic mechanical system (Q, g, U, W) in one chart and the
// auxiliary extension on T*Q built from it.
//
// State vectors are x = (q, p) of length 2n. The constraint covectors zeta_I
// are g*-orthonormalized at every point, so the constraint functions
// f_I = E_I^T g^-1 p are well defined whatever rows the config supplies.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "holonome/dual.hpp"
#include "holonome/expr.hpp"
#include "holonome/geometry.hpp"
#include "holonome/linalg.hpp"

namespace holonome {

struct MechSystem {
  std::string name;
  int n = 0;
  std::vector<std::string> coord_names;
  std::vector<bool> periodic;
  bool unconstrained = false;
  std::vector<Expression> g_exprs;               // n*n, row-major
  Expression U;
  std::vector<std::vector<Expression>> zeta;     // (n-k) rows of n entries
  ParamMap params;
  std::vector<std::string> param_names;          // slot order of every expression
  std::vector<double> bound;                     // values aligned to param_names
  std::optional<Eigen::VectorXd> search_lower;   // multistart box (default [-pi, pi])
  std::optional<Eigen::VectorXd> search_upper;

  int num_constraints() const { return static_cast<int>(zeta.size()); }
  int k() const { return n - num_constraints(); }

  /// Copy with some parameters replaced; throws ConfigError on unknown names.
  MechSystem with_params(const ParamMap& overrides) const;
};

/// Parses the sectioned config format (see docs/config_format.md).
MechSystem load_system(const std::string& config_text);
MechSystem load_system_file(const std::string& path);

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd state() const;
  static PhasePoint from_state(const Eigen::VectorXd& x);
};

/// Wraps periodic coordinates into [0, 2 pi).
Eigen::VectorXd wrap_coordinates(const MechSystem& sys, Eigen::VectorXd q);
Eigen::VectorXd wrap_state(const MechSystem& sys, Eigen::VectorXd x);

// ---------------------------------------------------------------------------
// Pointwise geometry over a generic scalar

template <class T>
struct PointGeometry {
  Mat<T> g;
  Mat<T> g_inv;
  Mat<T> E;    // n x (n-k), columns g*-orthonormal
  Mat<T> rho;  // I - g_inv E E^T
};

template <class T>
Mat<T> metric(const MechSystem& sys, std::span<const T> q) {
  Mat<T> g(sys.n, sys.n);
  for (int i = 0; i < sys.n; ++i)
    for (int j = 0; j < sys.n; ++j) g(i, j) = sys.g_exprs[i * sys.n + j].template evaluate<T>(q, sys.bound);
  return g;
}

/// Throws NumericError naming q when g(q) is not symmetric positive definite.
void check_metric_spd(const MechSystem& sys, const Eigen::MatrixXd& g, const Eigen::VectorXd& q);

template <class T>
PointGeometry<T> point_geometry(const MechSystem& sys, std::span<const T> q) {
  PointGeometry<T> pg;
  pg.g = metric<T>(sys, q);
  Eigen::VectorXd qv(sys.n);
  for (int i = 0; i < sys.n; ++i) qv(i) = value_of(q[i]);
  check_metric_spd(sys, values(pg.g), qv);
  pg.g_inv = spd_inverse(pg.g);
  const int m = sys.num_constraints();
  if (m == 0) {
    pg.E = Mat<T>(sys.n, 0);
    pg.rho = Mat<T>::identity(sys.n);
    return pg;
  }
  Mat<T> z(m, sys.n);
  for (int a = 0; a < m; ++a)
    for (int i = 0; i < sys.n; ++i) z(a, i) = sys.zeta[a][i].template evaluate<T>(q, sys.bound);
  pg.E = orthonormalize_coframe_t(z, pg.g_inv);
  pg.rho = Mat<T>::identity(sys.n) - pg.g_inv * pg.E * pg.E.transpose();
  return pg;
}

template <class T>
std::vector<Dual<T>> seed_variables(std::span<const T> q) {
  const std::size_t n = q.size();
  std::vector<Dual<T>> x;
  x.reserve(n);
  for (std::size_t i = 0; i < n; ++i) x.push_back(Dual<T>::variable(q[i], i, n));
  return x;
}

/// Full extension assembly at x = (q, p) over scalar T. Derivatives in q are
/// taken with one more dual level.
template <class T>
struct AssemblyT {
  PointGeometry<T> geo;
  Mat<T> F;                 // F(j, K) = d f_K / d q^j at fixed p
  Mat<T> Tm;                // E F^T rho - rho^T F E^T
  std::vector<T> f;         // constraint values
  std::vector<T> dH_dq;
  std::vector<T> dH_dp;     // g^-1 p
  T H;
};

template <class T>
AssemblyT<T> assemble_t(const MechSystem& sys, std::span<const T> q, std::span<const T> p) {
  const int n = sys.n;
  const int m = sys.num_constraints();
  AssemblyT<T> a;
  a.geo = point_geometry<T>(sys, q);
  a.dH_dp = a.geo.g_inv * p;
  T kin(0.0);
  for (int i = 0; i < n; ++i) kin += p[i] * a.dH_dp[i];
  a.H = 0.5 * kin + sys.U.template evaluate<T>(q, sys.bound);

  // One level up in q for dH/dq and F.
  const auto qd = seed_variables(q);
  std::span<const Dual<T>> qs(qd);
  std::vector<Dual<T>> pd(p.begin(), p.end());
  const Mat<Dual<T>> g_d = metric<Dual<T>>(sys, qs);
  const Mat<Dual<T>> gi_d = spd_inverse(g_d);
  const std::vector<Dual<T>> v_d = gi_d * std::span<const Dual<T>>(pd);
  Dual<T> Hd = sys.U.template evaluate<Dual<T>>(qs, sys.bound);
  for (int i = 0; i < n; ++i) Hd += 0.5 * (pd[i] * v_d[i]);
  a.dH_dq.resize(n);
  for (int j = 0; j < n; ++j) a.dH_dq[j] = Hd.partial(j);

  a.f.assign(m, T(0.0));
  a.F = Mat<T>(n, m);
  if (m > 0) {
    Mat<Dual<T>> z(m, n);
    for (int r = 0; r < m; ++r)
      for (int i = 0; i < n; ++i) z(r, i) = sys.zeta[r][i].template evaluate<Dual<T>>(qs, sys.bound);
    const Mat<Dual<T>> E_d = orthonormalize_coframe_t(z, gi_d);
    for (int K = 0; K < m; ++K) {
      Dual<T> fk(0.0);
      for (int i = 0; i < n; ++i) fk += E_d(i, K) * v_d[i];
      a.f[K] = fk.v;
      for (int j = 0; j < n; ++j) a.F(j, K) = fk.partial(j);
    }
  }
  a.Tm = a.geo.E * a.F.transpose() * a.geo.rho - a.geo.rho.transpose() * a.F * a.geo.E.transpose();
  return a;
}

/// (q_dot, p_dot) = (rho dH/dp, -rho^T dH/dq - T dH/dp).
template <class T>
std::vector<T> extension_field_t(const MechSystem& sys, std::span<const T> x) {
  const int n = sys.n;
  const auto a = assemble_t<T>(sys, x.subspan(0, n), x.subspan(n, n));
  std::vector<T> out(2 * n, T(0.0));
  const auto qdot = a.geo.rho * std::span<const T>(a.dH_dp);
  const auto rtd = a.geo.rho.transpose() * std::span<const T>(a.dH_dq);
  const auto tdp = a.Tm * std::span<const T>(a.dH_dp);
  for (int i = 0; i < n; ++i) {
    out[i] = qdot[i];
    out[n + i] = -rtd[i] - tdp[i];
  }
  return out;
}

/// rho^T(q) dU/dq over a generic scalar; zero exactly on the critical set C_Q.
template <class T>
std::vector<T> critical_residual_t(const MechSystem& sys, std::span<const T> q) {
  const auto geo = point_geometry<T>(sys, q);
  const auto dU = gradient_at<T>(sys.U, q, sys.bound);
  return geo.rho.transpose() * std::span<const T>(dU);
}

// ---------------------------------------------------------------------------
// Double-precision front end

struct ExtensionAssembly {
  Eigen::MatrixXd g, g_inv;
  Eigen::MatrixXd E;        // n x (n-k)
  Eigen::MatrixXd F;        // n x (n-k)
  Eigen::MatrixXd T;        // n x n, skew
  Eigen::MatrixXd rho, rho_bar;
  Eigen::MatrixXd piV;      // [[rho, 0], [-T, rho^T]]
  Eigen::VectorXd f, dH_dq, dH_dp;
  double H = 0.0;
};

ExtensionAssembly assemble(const MechSystem& sys, const PhasePoint& x);
ProjectorPair projectors(const MechSystem& sys, const Eigen::VectorXd& q);

double hamiltonian(const MechSystem& sys, const PhasePoint& x);
Eigen::VectorXd constraint_values(const MechSystem& sys, const PhasePoint& x);
double lyapunov(const MechSystem& sys, const PhasePoint& x);
Eigen::VectorXd extension_field(const MechSystem& sys, const Eigen::VectorXd& x);
/// Exact Jacobian of the extension field (nested duals).
Eigen::MatrixXd extension_field_jacobian(const MechSystem& sys, const Eigen::VectorXd& x);
PhasePoint physical_leaf_project(const MechSystem& sys, const PhasePoint& x);

/// ||q_dot - rho dH/dp||, ||rho^T (p_dot + dH/dq)||, ||rho_bar dH/dp|| at one
/// state, with (q_dot, p_dot) taken from the extension field.
struct HolderResiduals {
  double velocity = 0.0;
  double force = 0.0;
  double leaf = 0.0;
};
HolderResiduals holder_residuals_at(const MechSystem& sys, const Eigen::VectorXd& x);

/// ||rho_bar g^-1 p||: horizontality of the Legendre velocity g^-1 p. Zero
/// exactly on the physical leaf.
double horizontality_residual(const MechSystem& sys, const Eigen::VectorXd& x);

/// Columns of rho on Q, spanning the constraint distribution W.
std::vector<VectorField> distribution_fields(const MechSystem& sys);
/// pi_V as a field on T*Q with exact derivatives.
ProjectorField phase_projector_field(const MechSystem& sys);
/// Columns of pi_V, spanning V on T*Q.
std::vector<VectorField> phase_distribution_fields(const MechSystem& sys);

}  // namespace holonome
