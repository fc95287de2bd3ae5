#include "holonome/critical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "holonome/errors.hpp"
#include "holonome/format.hpp"
#include "holonome/parallel.hpp"

namespace holonome {
namespace {

std::string point_text(const Eigen::VectorXd& q) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < q.size(); ++i) s += (i ? ", " : "") + format_double(q(i));
  return s + ")";
}

// Pseudo-inverse keeping at most `rank` singular values above the relative
// threshold.
Eigen::MatrixXd truncated_pinv(const Eigen::MatrixXd& J, int rank) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  const double cut = s.size() ? kRankTolerance * s(0) : 0.0;
  for (Eigen::Index i = 0; i < s.size() && i < rank; ++i)
    if (s(i) > cut) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Damped Newton / Gauss-Newton on a generic residual map.
template <class Residual, class Jacobian>
Eigen::VectorXd solve(const Eigen::VectorXd& q0, Residual&& res, Jacobian&& jac, int rank,
                      const NewtonOptions& o, int* iterations) {
  Eigen::VectorXd q = q0;
  Eigen::VectorXd r = res(q);
  double norm = r.norm();
  int streak = 0;
  int it = 0;
  while (!(norm <= o.tol)) {
    if (!std::isfinite(norm)) throw NoConvergenceError("non-finite residual at " + point_text(q));
    if (it >= o.max_iter)
      throw NoConvergenceError("Newton did not converge after " + std::to_string(o.max_iter) +
                               " iterations (residual " + format_double(norm) + " at " + point_text(q) + ")");
    const Eigen::VectorXd step = -truncated_pinv(jac(q), rank) * r;
    Eigen::VectorXd qn = q + step;
    Eigen::VectorXd rn = res(qn);
    double lambda = 1.0;
    for (int h = 0; h < 20 && !(rn.norm() < norm); ++h) {
      lambda *= 0.5;
      qn = q + lambda * step;
      rn = res(qn);
    }
    if (!(rn.norm() < norm)) {  // no decrease anywhere along the step: take it whole
      qn = q + step;
      rn = res(qn);
    }
    ++it;
    streak = rn.norm() > 2.0 * norm ? streak + 1 : 0;
    if (streak >= 5)
      throw NoConvergenceError("Newton diverged from " + point_text(q0) + " (residual " +
                               format_double(rn.norm()) + ")");
    q = qn;
    r = rn;
    norm = r.norm();
  }
  if (iterations) *iterations = it;
  return q;
}

Eigen::VectorXd kernel_vector(const Eigen::MatrixXd& J) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
  return svd.matrixV().col(J.cols() - 1);
}

// Sign fixed so that the entry of largest modulus is positive.
Eigen::VectorXd canonical_sign(Eigen::VectorXd v) {
  Eigen::Index i = 0;
  v.cwiseAbs().maxCoeff(&i);
  return v(i) < 0.0 ? (-v).eval() : v;
}

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace

Eigen::VectorXd critical_residual(const MechSystem& sys, const Eigen::VectorXd& q) {
  const auto r = critical_residual_t<double>(sys, as_span(q));
  return Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
}

Eigen::MatrixXd critical_jacobian(const MechSystem& sys, const Eigen::VectorXd& q) {
  const auto qs = seed_variables<double>(as_span(q));
  const auto r = critical_residual_t<D1>(sys, std::span<const D1>(qs));
  Eigen::MatrixXd J(sys.n, sys.n);
  for (int i = 0; i < sys.n; ++i)
    for (int j = 0; j < sys.n; ++j) J(i, j) = r[i].partial(static_cast<std::size_t>(j));
  return J;
}

CriticalPoint analyze_point(const MechSystem& sys, const Eigen::VectorXd& q) {
  CriticalPoint cp;
  cp.q = wrap_coordinates(sys, q);
  cp.residual = critical_residual(sys, cp.q).norm();
  cp.jac = critical_jacobian(sys, cp.q);
  const int rank = numerical_rank(cp.jac);
  cp.kernel_dim = sys.n - rank;
  cp.generic = rank == sys.k();
  if (cp.generic) cp.index = component_index(sys, cp);
  return cp;
}

CriticalPoint newton_refine(const MechSystem& sys, const Eigen::VectorXd& q0, const NewtonOptions& opts) {
  if (q0.size() != sys.n) throw PreconditionError("point has the wrong dimension");
  int it = 0;
  const Eigen::VectorXd q = solve(
      q0, [&](const Eigen::VectorXd& x) { return critical_residual(sys, x); },
      [&](const Eigen::VectorXd& x) { return critical_jacobian(sys, x); }, sys.k(), opts, &it);
  CriticalPoint cp = analyze_point(sys, q);
  cp.iterations = it;
  return cp;
}

std::vector<CriticalPoint> find_U_critical_points(const MechSystem& sys, int grid_per_dim, const NewtonOptions& opts,
                                                  int threads) {
  if (grid_per_dim < 2) throw ConfigError("grid_per_dim must be at least 2");
  const int n = sys.n;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::vector<double>> axes(n);
  for (int i = 0; i < n; ++i) {
    double lo = sys.search_lower ? (*sys.search_lower)(i) : (sys.periodic[i] ? 0.0 : -std::numbers::pi);
    double hi = sys.search_upper ? (*sys.search_upper)(i) : (sys.periodic[i] ? two_pi : std::numbers::pi);
    const bool open = sys.periodic[i] && std::abs(hi - lo - two_pi) < 1e-12;
    const int denom = open ? grid_per_dim : grid_per_dim - 1;
    for (int j = 0; j < grid_per_dim; ++j) axes[i].push_back(lo + (hi - lo) * j / denom);
  }
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) {
    total *= static_cast<std::size_t>(grid_per_dim);
    if (total > 100'000'000) throw ConfigError("multistart grid too large");
  }

  auto grad = [&](const Eigen::VectorXd& q) { return grad_bound(sys.U, as_span(q), sys.bound); };
  auto hess = [&](const Eigen::VectorXd& q) { return hessian_bound(sys.U, as_span(q), sys.bound); };
  std::vector<std::optional<Eigen::VectorXd>> found(total);
  parallel_for(total, threads > 0 ? threads : default_thread_count(), [&](std::size_t idx) {
    Eigen::VectorXd q0(n);
    std::size_t rest = idx;
    for (int i = n - 1; i >= 0; --i) {
      q0(i) = axes[i][rest % grid_per_dim];
      rest /= grid_per_dim;
    }
    try {
      found[idx] = solve(q0, grad, hess, n, opts, nullptr);
    } catch (const NumericError&) {
      // This start lies outside every basin.
    }
  });

  std::vector<Eigen::VectorXd> pts;
  for (auto& f : found) {
    if (!f) continue;
    const Eigen::VectorXd q = wrap_coordinates(sys, *f);
    bool dup = false;
    for (const auto& p : pts) dup = dup || periodic_distance(p, q, sys.periodic) <= 1e-6;
    if (!dup) pts.push_back(q);
  }
  std::sort(pts.begin(), pts.end(), lex_less);
  std::vector<CriticalPoint> out;
  for (const auto& q : pts) {
    if (numerical_rank(hess(q)) < n) throw NumericError("potential is degenerate at " + point_text(q));
    out.push_back(analyze_point(sys, q));
  }
  return out;
}

int component_index(const MechSystem& sys, const CriticalPoint& cp) {
  if (numerical_rank(cp.jac) != sys.k()) throw PreconditionError("index undefined at non-generic point " + point_text(cp.q));
  const auto geo = point_geometry<double>(sys, as_span(cp.q));
  Eigen::EigenSolver<Eigen::MatrixXd> es(values(geo.g_inv) * cp.jac, false);
  std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + sys.n);
  std::stable_sort(ev.begin(), ev.end(), [](auto a, auto b) { return std::abs(a) < std::abs(b); });
  int count = 0;
  for (int i = sys.n - sys.k(); i < sys.n; ++i) count += ev[i].real() < 0.0;
  return count;
}

CriticalComponent continue_component(const MechSystem& sys, const CriticalPoint& seed, const ContinuationOptions& opts) {
  if (!(opts.step > 0.0)) throw ConfigError("continuation step must be positive");
  if (opts.max_points < 1) throw ConfigError("max_points must be at least 1");
  const int dim = sys.n - sys.k();
  CriticalPoint s0 = newton_refine(sys, seed.q, opts.newton);
  if (!s0.generic) throw PreconditionError("seed " + point_text(s0.q) + " is not a generic critical point");
  CriticalComponent c;
  c.index = s0.index;
  c.points.push_back(s0);
  if (dim == 0) {
    c.closed = true;
    return c;
  }
  if (dim > 1) throw PreconditionError("continuation of components of dimension > 1 is not supported");

  Eigen::VectorXd tangent = canonical_sign(kernel_vector(s0.jac)) * (opts.orientation < 0 ? -1.0 : 1.0);
  double step = opts.step;
  while (true) {
    const CriticalPoint& prev = c.points.back();
    CriticalPoint next;
    bool ok = false;
    for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
      try {
        next = newton_refine(sys, prev.q + step * tangent, opts.newton);
        ok = true;
      } catch (const NoConvergenceError&) {
        if (attempt == 3) throw;
        step *= 0.5;
      }
    }
    step = opts.step;
    if (!next.generic || next.kernel_dim != dim) {
      c.nongeneric_boundary = true;
      c.warning = "rank drop at " + point_text(next.q);
      break;
    }
    if (next.index != c.index) {
      c.nongeneric_boundary = true;
      c.warning = "index changes from " + std::to_string(c.index) + " to " + std::to_string(next.index) + " at " +
                  point_text(next.q);
      break;
    }
    Eigen::VectorXd t = kernel_vector(next.jac);
    if (t.dot(tangent) < 0.0) t = -t;
    tangent = t;
    const double dseed = periodic_distance(next.q, s0.q, sys.periodic);
    if (c.points.size() >= 10 && dseed <= opts.step / 2) {
      c.closed = true;
      c.arc_length += periodic_distance(prev.q, next.q, sys.periodic) + dseed;
      break;
    }
    c.arc_length += periodic_distance(prev.q, next.q, sys.periodic);
    c.points.push_back(std::move(next));
    if (static_cast<long>(c.points.size()) >= opts.max_points)
      throw NumericError("continuation exceeded max_points = " + std::to_string(opts.max_points));
  }
  return c;
}

double distance_to_component(const MechSystem& sys, const CriticalComponent& c, const Eigen::VectorXd& q) {
  const auto& P = c.points;
  if (P.empty()) return std::numeric_limits<double>::infinity();
  double best = periodic_distance(P[0].q, q, sys.periodic);
  const std::size_t segs = c.closed && P.size() > 1 ? P.size() : P.size() - 1;
  for (std::size_t i = 0; i < segs; ++i) {
    const Eigen::VectorXd& a = P[i].q;
    const Eigen::VectorXd& b = P[(i + 1) % P.size()].q;
    const Eigen::VectorXd d = periodic_delta(a, b, sys.periodic);
    const Eigen::VectorXd v = periodic_delta(a, q, sys.periodic);
    const double dd = d.squaredNorm();
    const double t = dd > 0.0 ? std::clamp(v.dot(d) / dd, 0.0, 1.0) : 0.0;
    best = std::min(best, (v - t * d).norm());
  }
  return best;
}

double hausdorff_distance(const MechSystem& sys, const CriticalComponent& a, const CriticalComponent& b) {
  auto directed = [&](const CriticalComponent& x, const CriticalComponent& y) {
    double worst = 0.0;
    for (const auto& p : x.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& r : y.points) best = std::min(best, periodic_distance(p.q, r.q, sys.periodic));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

std::vector<Eigen::VectorXd> critical_bundle_fibre(const MechSystem& sys, const Eigen::VectorXd& q) {
  const double res = critical_residual(sys, q).norm();
  if (res > 1e-8)
    throw PreconditionError("point " + point_text(q) + " is not on the critical set (residual " + format_double(res) + ")");
  const Eigen::MatrixXd E = values(point_geometry<double>(sys, as_span(q)).E);
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index j = 0; j < E.cols(); ++j) {
    Eigen::VectorXd x(2 * sys.n);
    x << q, E.col(j);
    const double v = extension_field(sys, x).norm();
    if (v > 1e-8) throw NumericError("extension field does not vanish on the fibre at " + point_text(q));
    out.push_back(E.col(j));
  }
  return out;
}

NongenericityReport nongenericity_indicator(const MechSystem& sys, const CriticalPoint& cp) {
  NongenericityReport r;
  const int k = sys.k();
  r.nongeneric = numerical_rank(cp.jac) < k;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cp.jac);
  const Eigen::VectorXd& s = svd.singularValues();
  r.sigma_ratio = (k == 0) ? 1.0 : (s(0) > 0.0 ? s(k - 1) / s(0) : 0.0);
  return r;
}

ManifoldResult build_critical_manifold(const MechSystem& sys, const std::vector<Eigen::VectorXd>& seeds,
                                       const ContinuationOptions& opts, int threads) {
  const int nt = threads > 0 ? threads : default_thread_count();
  std::vector<CriticalPoint> refined(seeds.size());
  parallel_for(seeds.size(), nt, [&](std::size_t i) { refined[i] = newton_refine(sys, seeds[i], opts.newton); });
  std::sort(refined.begin(), refined.end(), [](const auto& a, const auto& b) { return lex_less(a.q, b.q); });
  ManifoldResult out;
  for (auto& r : refined) {
    bool dup = false;
    for (const auto& s : out.seeds) dup = dup || periodic_distance(s.q, r.q, sys.periodic) <= 1e-6;
    if (!dup) out.seeds.push_back(std::move(r));
  }
  std::vector<CriticalComponent> comps(out.seeds.size());
  parallel_for(out.seeds.size(), nt, [&](std::size_t i) { comps[i] = continue_component(sys, out.seeds[i], opts); });
  for (std::size_t i = 0; i < comps.size(); ++i) {
    bool dup = false;
    for (const auto& c : out.components)
      dup = dup || distance_to_component(sys, c, out.seeds[i].q) <= opts.step / 2;
    if (!dup) out.components.push_back(std::move(comps[i]));
  }
  return out;
}

int default_thread_count() {
  if (const char* env = std::getenv("HOLONOME_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError(std::string("invalid HOLONOME_THREADS '") + env + "'");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

nlohmann::json critical_point_to_json(const CriticalPoint& cp) {
  nlohmann::json j;
  j["q"] = std::vector<double>(cp.q.data(), cp.q.data() + cp.q.size());
  j["residual"] = cp.residual;
  j["kernel_dim"] = cp.kernel_dim;
  j["generic"] = cp.generic;
  j["index"] = cp.generic ? nlohmann::json(cp.index) : nlohmann::json(nullptr);
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cp.jac.rows(); ++i) {
    std::vector<double> row(cp.jac.cols());
    for (Eigen::Index k = 0; k < cp.jac.cols(); ++k) row[k] = cp.jac(i, k);
    rows.push_back(row);
  }
  j["jac"] = rows;
  return j;
}

nlohmann::json component_to_json(const MechSystem& sys, const CriticalComponent& c, int component_id,
                                 const std::string& model) {
  nlohmann::json j;
  j["model"] = model;
  j["params"] = sys.params;
  j["component_id"] = component_id;
  j["index"] = c.index;
  j["closed"] = c.closed;
  j["arc_length"] = c.arc_length;
  j["nongeneric_boundary"] = c.nongeneric_boundary;
  if (!c.warning.empty()) j["warning"] = c.warning;
  nlohmann::json pts = nlohmann::json::array(), res = nlohmann::json::array();
  for (const auto& p : c.points) {
    pts.push_back(std::vector<double>(p.q.data(), p.q.data() + p.q.size()));
    res.push_back(p.residual);
  }
  j["points"] = pts;
  j["residuals"] = res;
  return j;
}

void write_components_csv(std::ostream& out, const MechSystem& sys, const std::vector<CriticalComponent>& comps) {
  out << "component_id,index";
  for (int i = 1; i <= sys.n; ++i) out << ",q_" << i;
  out << ",residual\n";
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (const auto& p : comps[c].points) {
      out << c << ',' << comps[c].index;
      for (Eigen::Index i = 0; i < p.q.size(); ++i) out << ',' << format_double(p.q(i));
      out << ',' << format_double(p.residual) << '\n';
    }
}

}  // namespace holonome
