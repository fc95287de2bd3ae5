#include "holonome/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace holonome {
namespace {

double fd_step(double x) { return 1e-6 * (1.0 + std::abs(x)); }

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class T>
std::vector<Dual<T>> seed(std::span<const T> q) {
  const std::size_t n = q.size();
  std::vector<Dual<T>> x;
  x.reserve(n);
  for (std::size_t i = 0; i < n; ++i) x.push_back(Dual<T>::variable(q[i], i, n));
  return x;
}

// Value and Jacobian of a field at a T-valued point, using the next derivative
// level. Returns false when that level is missing.
template <class T>
bool eval_with_jacobian(const VectorField& X, std::span<const T> q, std::vector<T>& val,
                        std::vector<std::vector<T>>& jac) {
  const std::size_t n = q.size();
  std::vector<Dual<T>> r;
  auto x = seed(q);
  if constexpr (std::is_same_v<T, double>) {
    if (!X.f1) return false;
    r = X.f1(x);
  } else {
    if (!X.f2) return false;
    r = X.f2(x);
  }
  val.resize(r.size());
  jac.assign(r.size(), std::vector<T>(n, T(0.0)));
  for (std::size_t i = 0; i < r.size(); ++i) {
    val[i] = r[i].v;
    for (std::size_t j = 0; j < n; ++j) jac[i][j] = r[i].partial(j);
  }
  return true;
}

}  // namespace

Eigen::MatrixXd orthonormalize_coframe(const std::vector<Eigen::VectorXd>& zetas,
                                       const Eigen::MatrixXd& g_inv) {
  const int n = static_cast<int>(g_inv.rows());
  Mat<double> z(static_cast<int>(zetas.size()), n);
  for (int a = 0; a < z.rows(); ++a) {
    if (zetas[a].size() != n) throw ConfigError("covector length does not match the metric");
    for (int i = 0; i < n; ++i) z(a, i) = zetas[a](i);
  }
  return values(orthonormalize_coframe_t(z, from_eigen(g_inv)));
}

ProjectorPair projectors_from_coframe(const Eigen::MatrixXd& E, const Eigen::MatrixXd& g_inv) {
  const Eigen::Index n = g_inv.rows();
  ProjectorPair pp;
  pp.g_inv = g_inv;
  pp.rho_bar = E.cols() == 0 ? Eigen::MatrixXd::Zero(n, n) : Eigen::MatrixXd(g_inv * E * E.transpose());
  pp.rho = Eigen::MatrixXd::Identity(n, n) - pp.rho_bar;
  return pp;
}

CompatibleTriple compatible_triple(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& pi,
                                   const Eigen::MatrixXd& g_prime) {
  const Eigen::Index m = omega.rows();
  if (omega.cols() != m || pi.rows() != m || pi.cols() != m || g_prime.rows() != m ||
      g_prime.cols() != m)
    throw ConfigError("compatible_triple: dimension mismatch");
  if (numerical_rank(omega) != m) throw PreconditionError("compatible_triple: omega is degenerate");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd pi_bar = I - pi;
  const double scale = std::max(1.0, omega.cwiseAbs().maxCoeff()) * std::max(1.0, pi.cwiseAbs().maxCoeff());
  if ((pi.transpose() * omega * pi_bar).cwiseAbs().maxCoeff() > 1e-9 * scale * scale)
    throw PreconditionError("compatible_triple: projector is not skew-orthogonal");

  const Eigen::MatrixXd gt_raw = pi.transpose() * g_prime * pi + pi_bar.transpose() * g_prime * pi_bar;
  const Eigen::MatrixXd gt = 0.5 * (gt_raw + gt_raw.transpose());
  const Eigen::MatrixXd S = matrix_sqrt_spd(gt);
  const Eigen::MatrixXd S_inv = S.inverse();
  const Eigen::MatrixXd K = gt.ldlt().solve(omega);
  // In the g~-orthonormal frame K is skew, so -K^2 = Kh^T Kh is SPD.
  const Eigen::MatrixXd Kh = S_inv * omega * S_inv;
  const Eigen::MatrixXd KtK = Kh.transpose() * Kh;
  const Eigen::MatrixXd Ah = matrix_sqrt_spd(0.5 * (KtK + KtK.transpose()));
  const Eigen::MatrixXd A = S_inv * Ah * S;
  const Eigen::MatrixXd A_inv = S_inv * Ah.inverse() * S;

  CompatibleTriple t;
  t.omega = omega;
  t.J = K * A_inv;
  const Eigen::MatrixXd gK = S * Ah * S;
  t.g_K = 0.5 * (gK + gK.transpose());
  (void)A;
  return t;
}

TripleResiduals triple_residuals(const CompatibleTriple& t, const Eigen::MatrixXd& pi) {
  const Eigen::Index m = t.J.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  TripleResiduals r;
  r.j_squared = (t.J * t.J + I).cwiseAbs().maxCoeff();
  r.compat = (t.omega - t.g_K * t.J).cwiseAbs().maxCoeff();
  r.hermitian = (t.J.transpose() * t.g_K * t.J - t.g_K).cwiseAbs().maxCoeff();
  r.commutation = std::max((pi * t.J - t.J * pi).cwiseAbs().maxCoeff(),
                           (t.g_K * pi - pi.transpose() * t.g_K).cwiseAbs().maxCoeff());
  return r;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd VectorField::value(const Eigen::VectorXd& q) const {
  if (!f0) throw PreconditionError("vector field has no evaluator");
  auto v = f0(as_span(q));
  if (static_cast<int>(v.size()) != dim) throw DomainError("vector field returned wrong length");
  Eigen::VectorXd out = to_vec(v);
  if (!out.allFinite()) throw DomainError("vector field produced a non-finite value");
  return out;
}

Eigen::MatrixXd VectorField::jacobian(const Eigen::VectorXd& q) const {
  const Eigen::Index n = q.size();
  std::vector<double> val;
  std::vector<std::vector<double>> j;
  if (eval_with_jacobian<double>(*this, as_span(q), val, j)) {
    Eigen::MatrixXd out(dim, n);
    for (int i = 0; i < dim; ++i)
      for (Eigen::Index c = 0; c < n; ++c) out(i, c) = j[i][c];
    return out;
  }
  if (jac) return jac(q);
  Eigen::MatrixXd out(dim, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double h = fd_step(q(c));
    Eigen::VectorXd qp = q, qm = q;
    qp(c) += h;
    qm(c) -= h;
    out.col(c) = (value(qp) - value(qm)) / (2.0 * h);
  }
  return out;
}

VectorField black_box_field(int dim, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f) {
  VectorField v;
  v.dim = dim;
  v.f0 = [f = std::move(f)](std::span<const double> q) {
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
    Eigen::VectorXd r = f(x);
    return std::vector<double>(r.data(), r.data() + r.size());
  };
  return v;
}

Eigen::VectorXd lie_bracket(const VectorField& X, const VectorField& Y, const Eigen::VectorXd& q) {
  if (X.dim != Y.dim || X.dim != q.size()) throw PreconditionError("lie_bracket: dimension mismatch");
  return Y.jacobian(q) * X.value(q) - X.jacobian(q) * Y.value(q);
}

VectorField lie_bracket_field(const VectorField& X, const VectorField& Y) {
  VectorField b;
  b.dim = X.dim;
  b.f0 = [X, Y](std::span<const double> q) {
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
    Eigen::VectorXd r = lie_bracket(X, Y, x);
    return std::vector<double>(r.data(), r.data() + r.size());
  };
  if (X.f2 && Y.f2) {
    b.f1 = [X, Y](std::span<const D1> q) {
      std::vector<D1> xv, yv;
      std::vector<std::vector<D1>> xj, yj;
      eval_with_jacobian<D1>(X, q, xv, xj);
      eval_with_jacobian<D1>(Y, q, yv, yj);
      const std::size_t n = q.size();
      std::vector<D1> out(xv.size(), D1(0.0));
      for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += yj[i][j] * xv[j] - xj[i][j] * yv[j];
      return out;
    };
  }
  return b;
}

FlagReport flag(const std::vector<VectorField>& spanning, const Eigen::VectorXd& q, int max_depth) {
  FlagReport rep;
  const Eigen::Index n = q.size();
  if (spanning.empty()) {
    rep.ranks = {0};
    rep.chow = n == 0;
    return rep;
  }

  // Greedy pruning: keep a candidate iff it raises the rank of the stack.
  auto prune = [&](const std::vector<VectorField>& cand, std::vector<VectorField>& kept,
                   Eigen::MatrixXd& stack) {
    for (const auto& f : cand) {
      Eigen::VectorXd v = f.value(q);
      Eigen::MatrixXd trial(n, stack.cols() + 1);
      trial << stack, v;
      if (numerical_rank(trial) > numerical_rank(stack)) {
        stack = trial;
        kept.push_back(f);
      }
    }
  };

  std::vector<VectorField> level0, current;
  Eigen::MatrixXd stack(n, 0);
  prune(spanning, level0, stack);
  current = level0;
  int rank = numerical_rank(stack);
  rep.ranks.push_back(rank);
  int depth = 0;
  while (rank < n) {
    if (depth >= max_depth) {
      rep.stabilized = false;
      rep.warning = "flag did not stabilize within max_depth = " + std::to_string(max_depth) +
                    "; degree is a lower bound";
      break;
    }
    std::vector<VectorField> cand;
    for (const auto& a : level0)
      for (const auto& b : current) cand.push_back(lie_bracket_field(a, b));
    std::vector<VectorField> next = current;
    prune(cand, next, stack);
    const int r = numerical_rank(stack);
    if (r == rank) break;  // stabilized
    ++depth;
    rank = r;
    rep.ranks.push_back(rank);
    current = std::move(next);
  }
  rep.degree = depth;
  rep.chow = rank == n;
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<Eigen::MatrixXd> ProjectorField::partials(const Eigen::VectorXd& x) const {
  if (derivatives) return derivatives(x);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(x.size()));
  for (Eigen::Index r = 0; r < x.size(); ++r) {
    const double h = fd_step(x(r));
    Eigen::VectorXd xp = x, xm = x;
    xp(r) += h;
    xm(r) -= h;
    out.push_back((f0(xp) - f0(xm)) / (2.0 * h));
  }
  return out;
}

std::vector<Eigen::MatrixXd> frobenius_tensor(const ProjectorField& pi, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const Eigen::MatrixXd P = pi.f0(x);
  const auto dP = pi.partials(x);
  // C^k_{rs} = d_r P(k, s) - d_s P(k, r); Lambda^k = P^T C^k P.
  std::vector<Eigen::MatrixXd> lam(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::MatrixXd C(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index s = 0; s < n; ++s) C(r, s) = dP[r](k, s) - dP[s](k, r);
    lam[k] = P.transpose() * C * P;
  }
  return lam;
}

double frobenius_defect(const ProjectorField& pi, const Eigen::VectorXd& x) {
  double m = 0.0;
  for (const auto& l : frobenius_tensor(pi, x)) m = std::max(m, l.cwiseAbs().maxCoeff());
  return m;
}

std::vector<VectorField> projector_columns(const ProjectorField& pi) {
  std::vector<VectorField> cols;
  for (int i = 0; i < pi.dim; ++i) {
    VectorField v = black_box_field(pi.dim, [pi, i](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return pi.f0(x).col(i);
    });
    if (pi.derivatives) {
      v.jac = [pi, i](const Eigen::VectorXd& x) {
        const auto d = pi.derivatives(x);
        Eigen::MatrixXd j(pi.dim, x.size());
        for (Eigen::Index r = 0; r < x.size(); ++r) j.col(r) = d[r].col(i);
        return j;
      };
    }
    cols.push_back(std::move(v));
  }
  return cols;
}

// ---------------------------------------------------------------------------

double ScalarField::value(const Eigen::VectorXd& x) const { return f0(as_span(x)); }

Eigen::VectorXd ScalarField::gradient(const Eigen::VectorXd& x) const {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n);
  if (f1) {
    auto xs = seed<double>(as_span(x));
    D1 r = f1(xs);
    for (Eigen::Index i = 0; i < n; ++i) g(i) = r.partial(static_cast<std::size_t>(i));
    return g;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = fd_step(x(i));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (value(xp) - value(xm)) / (2.0 * h);
  }
  return g;
}

Eigen::VectorXd hamiltonian_vector(const Eigen::VectorXd& grad_f, const Eigen::MatrixXd& omega) {
  return -omega.partialPivLu().solve(grad_f);
}

double v_bracket(const Eigen::VectorXd& grad_f, const Eigen::VectorXd& grad_g,
                 const Eigen::MatrixXd& pi, const Eigen::MatrixXd& omega) {
  const Eigen::VectorXd a = pi * hamiltonian_vector(grad_f, omega);
  const Eigen::VectorXd b = pi * hamiltonian_vector(grad_g, omega);
  // Antisymmetrized so that {f, g} = -{g, f} holds bit for bit.
  return 0.5 * ((omega * a).dot(b) - (omega * b).dot(a));
}

double v_bracket(const ScalarField& f, const ScalarField& g, const Eigen::MatrixXd& pi,
                 const Eigen::MatrixXd& omega, const Eigen::VectorXd& x) {
  return v_bracket(f.gradient(x), g.gradient(x), pi, omega);
}

}  // namespace holonome
