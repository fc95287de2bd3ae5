#pragma once

// Pointwise differential geometry: projection tensors of a constraint
// distribution, Lie brackets and the bracket flag, the Frobenius tensor, the
// compatible almost-Kaehler triple and the projected (Dirac-type) bracket.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "holonome/dual.hpp"
#include "holonome/linalg.hpp"

namespace holonome {

struct ProjectorPair {
  Eigen::MatrixXd rho;      // projection onto W
  Eigen::MatrixXd rho_bar;  // I - rho
  Eigen::MatrixXd g_inv;
};

/// Gram-Schmidt of the constraint 1-forms in the co-metric g_inv. Each entry
/// of `zetas` is one covector; the result holds them as columns with
/// E^T g_inv E = I. Throws RankError when the covectors are dependent.
Eigen::MatrixXd orthonormalize_coframe(const std::vector<Eigen::VectorXd>& zetas,
                                       const Eigen::MatrixXd& g_inv);

/// Generic-scalar version used when E has to be differentiated.
template <class T>
Mat<T> orthonormalize_coframe_t(const Mat<T>& zeta_rows, const Mat<T>& g_inv);

/// rho_bar = g_inv E E^T, rho = I - rho_bar.
ProjectorPair projectors_from_coframe(const Eigen::MatrixXd& E, const Eigen::MatrixXd& g_inv);

struct CompatibleTriple {
  Eigen::MatrixXd g_K;
  Eigen::MatrixXd J;
  Eigen::MatrixXd omega;
};

/// Builds (g_K, J, omega) with omega(X, Y) = (omega X)^T Y = g_K(J X, Y),
/// J^2 = -1 and pi commuting with J. `pi` must satisfy pi omega^-1 =
/// omega^-1 pi^T (skew-orthogonal splitting).
CompatibleTriple compatible_triple(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& pi,
                                   const Eigen::MatrixXd& g_prime);

/// Largest violation among the four triple invariants, for diagnostics.
struct TripleResiduals {
  double j_squared;    // |J J + I|
  double compat;       // |omega - g_K J|
  double hermitian;    // |J^T g_K J - g_K|
  double commutation;  // max(|pi J - J pi|, |g_K pi - pi^T g_K|)
};
TripleResiduals triple_residuals(const CompatibleTriple& t, const Eigen::MatrixXd& pi);

// ---------------------------------------------------------------------------
// Vector fields

/// A vector field on a chart given by evaluation callbacks. f1/f2 evaluate
/// the coefficients on first/second-order duals; when missing, derivatives
/// come from central differences with h = 1e-6 (1 + |q_j|).
struct VectorField {
  int dim = 0;
  std::function<std::vector<double>(std::span<const double>)> f0;
  std::function<std::vector<D1>(std::span<const D1>)> f1;
  std::function<std::vector<D2>(std::span<const D2>)> f2;
  /// Optional exact Jacobian for fields only known numerically.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jac;

  Eigen::VectorXd value(const Eigen::VectorXd& q) const;
  /// J(i, j) = d X^i / d q^j.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& q) const;
  bool exact_jacobian() const { return f1 || jac; }
};

/// Wraps a generic callable `f(std::span<const T>) -> std::vector<T>` for all
/// three scalar levels.
template <class F>
VectorField make_field(int dim, F f) {
  VectorField v;
  v.dim = dim;
  v.f0 = [f](std::span<const double> q) { return f(q); };
  v.f1 = [f](std::span<const D1> q) { return f(q); };
  v.f2 = [f](std::span<const D2> q) { return f(q); };
  return v;
}

/// Field known only through its values (derivatives by finite differences).
VectorField black_box_field(int dim, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f);

/// [X, Y]^i = X^j d_j Y^i - Y^j d_j X^i at q.
Eigen::VectorXd lie_bracket(const VectorField& X, const VectorField& Y, const Eigen::VectorXd& q);

/// [X, Y] as a field; derivative levels are kept where the inputs allow.
VectorField lie_bracket_field(const VectorField& X, const VectorField& Y);

struct FlagReport {
  std::vector<int> ranks;
  int degree = 0;
  bool chow = false;
  bool stabilized = true;  // false: max_depth hit, degree is a lower bound
  std::string warning;
};

FlagReport flag(const std::vector<VectorField>& spanning, const Eigen::VectorXd& q,
                int max_depth = 8);

// ---------------------------------------------------------------------------
// Projector fields and the Frobenius tensor

struct ProjectorField {
  int dim = 0;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> f0;
  /// Optional exact derivative: returns d pi / d x^r for r = 0..dim-1.
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)> derivatives;

  std::vector<Eigen::MatrixXd> partials(const Eigen::VectorXd& x) const;
};

/// Lambda^k_ij = pi^r_i pi^s_j (d_r pi^k_s - d_s pi^k_r); returns max |Lambda|.
double frobenius_defect(const ProjectorField& pi, const Eigen::VectorXd& x);
/// Full tensor, indexed [k](i, j).
std::vector<Eigen::MatrixXd> frobenius_tensor(const ProjectorField& pi, const Eigen::VectorXd& x);

/// Spanning fields of the image of a projector field (its columns).
std::vector<VectorField> projector_columns(const ProjectorField& pi);

// ---------------------------------------------------------------------------
// Scalar fields and the projected bracket

struct ScalarField {
  int dim = 0;
  std::function<double(std::span<const double>)> f0;
  std::function<D1(std::span<const D1>)> f1;

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
};

template <class F>
ScalarField make_scalar_field(int dim, F f) {
  ScalarField s;
  s.dim = dim;
  s.f0 = [f](std::span<const double> x) { return f(x); };
  s.f1 = [f](std::span<const D1> x) { return f(x); };
  return s;
}

/// Hamiltonian vector field X_f = -omega^-1 grad f.
Eigen::VectorXd hamiltonian_vector(const Eigen::VectorXd& grad_f, const Eigen::MatrixXd& omega);

/// {f, g}_V = omega(pi X_f, pi X_g).
double v_bracket(const Eigen::VectorXd& grad_f, const Eigen::VectorXd& grad_g,
                 const Eigen::MatrixXd& pi, const Eigen::MatrixXd& omega);
double v_bracket(const ScalarField& f, const ScalarField& g, const Eigen::MatrixXd& pi,
                 const Eigen::MatrixXd& omega, const Eigen::VectorXd& x);

// ---------------------------------------------------------------------------

template <class T>
Mat<T> orthonormalize_coframe_t(const Mat<T>& zeta_rows, const Mat<T>& g_inv) {
  using std::sqrt;
  const int m = zeta_rows.rows();
  const int n = zeta_rows.cols();
  Mat<T> E(n, m);
  // Scale for the relative degeneracy test.
  double scale = 0.0;
  for (int a = 0; a < m; ++a) {
    T s(0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s += zeta_rows(a, i) * g_inv(i, j) * zeta_rows(a, j);
    scale = std::max(scale, value_of(s));
  }
  for (int a = 0; a < m; ++a) {
    std::vector<T> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[i] = zeta_rows(a, i);
    // Two passes of modified Gram-Schmidt for stability.
    for (int pass = 0; pass < 2; ++pass) {
      for (int b = 0; b < a; ++b) {
        T c(0.0);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) c += E(i, b) * g_inv(i, j) * v[j];
        for (int i = 0; i < n; ++i) v[i] -= c * E(i, b);
      }
    }
    T nrm2(0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) nrm2 += v[i] * g_inv(i, j) * v[j];
    if (!(value_of(nrm2) > kRankTolerance * kRankTolerance * scale) || !(scale > 0.0))
      throw RankError("constraint covectors are linearly dependent");
    T nrm = sqrt(nrm2);
    for (int i = 0; i < n; ++i) E(i, a) = v[i] / nrm;
  }
  return E;
}

}  // namespace holonome
