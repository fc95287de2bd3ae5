#include "holonome/stability.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "holonome/critical.hpp"
#include "holonome/errors.hpp"
#include "holonome/format.hpp"

namespace holonome {
namespace {

constexpr double kEnumerationCap = 1e7;

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

double enumeration_size(std::size_t base, int r) { return std::pow(static_cast<double>(base), r); }

bool off_axis(std::complex<double> z, double tol) { return std::abs(z.real()) > tol * (1.0 + std::abs(z)); }

// Calls fn(indices) for every non-decreasing index sequence of length r over [0, m).
template <class Fn>
void for_each_multiset(int m, int r, Fn&& fn) {
  std::vector<int> idx(r, 0);
  while (true) {
    fn(idx);
    int pos = r - 1;
    while (pos >= 0 && idx[pos] == m - 1) --pos;
    if (pos < 0) return;
    ++idx[pos];
    for (int i = pos + 1; i < r; ++i) idx[i] = idx[pos];
  }
}

}  // namespace

std::string to_string(Classification c) {
  switch (c) {
    case Classification::asymptotically_stable: return "asymptotically_stable";
    case Classification::unstable: return "unstable";
    case Classification::critically_stable: return "critically_stable";
    case Classification::degenerate: return "degenerate";
  }
  return "degenerate";
}

Linearization linearize_extension(const MechSystem& sys, const Eigen::VectorXd& q_c, double critical_tol) {
  const int n = sys.n;
  const double res = critical_residual(sys, q_c).norm();
  if (res > critical_tol)
    throw PreconditionError("point is not on the critical set (|rho^T dU| = " + format_double(res) + ")");

  // rho and its first derivatives in q.
  const auto qs = seed_variables<double>(as_span(q_c));
  const auto geo = point_geometry<D1>(sys, std::span<const D1>(qs));
  Eigen::MatrixXd rho(n, n), g_inv(n, n);
  std::vector<Eigen::MatrixXd> drho(n, Eigen::MatrixXd(n, n));  // drho[s](i, r) = d_s rho^i_r
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < n; ++r) {
      rho(i, r) = geo.rho(i, r).v;
      g_inv(i, r) = geo.g_inv(i, r).v;
      for (int s = 0; s < n; ++s) drho[s](i, r) = geo.rho(i, r).partial(s);
    }
  const Eigen::VectorXd dU = grad_bound(sys.U, as_span(q_c), sys.bound);
  const Eigen::MatrixXd D2U = hessian_bound(sys.U, as_span(q_c), sys.bound);
  const Eigen::MatrixXd rho_bar = Eigen::MatrixXd::Identity(n, n) - rho;

  Linearization L;
  L.R = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);  // K(r, s) = dU_i d_s rho^i_r
  for (int s = 0; s < n; ++s) {
    const Eigen::VectorXd w = drho[s].transpose() * dU;  // w_r = dU_i d_s rho^i_r
    K.col(s) = w;
    // R_jk += rho^s_k (rho^T w)_j
    L.R += (rho.transpose() * w) * rho.row(s);
  }
  const Eigen::MatrixXd jres = rho.transpose() * D2U + K;  // D(rho^T dU)

  const Eigen::MatrixXd upper = rho * g_inv * rho.transpose();
  const Eigen::MatrixXd lower_block = -(rho.transpose() * D2U * rho + L.R);
  L.block_form = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  L.block_form.topRightCorner(n, n) = upper;
  L.block_form.bottomLeftCorner(n, n) = lower_block;
  L.matrix = L.block_form;
  L.matrix.bottomLeftCorner(n, n) -= jres * rho_bar;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
  x.head(n) = q_c;
  L.piV = assemble(sys, PhasePoint::from_state(x)).piV;
  L.finite_difference.resize(2 * n, 2 * n);
  for (int j = 0; j < 2 * n; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    L.finite_difference.col(j) = (extension_field(sys, xp) - extension_field(sys, xm)) / (2 * h);
  }
  L.fd_deviation = max_abs(L.matrix - L.finite_difference);
  L.block_fd_deviation = max_abs(L.block_form - L.finite_difference);
  L.block_on_V_deviation = max_abs(L.block_form - L.finite_difference * L.piV);
  L.fd_check_passed = L.fd_deviation <= 1e-5;
  return L;
}

Spectrum spectrum_of(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  if (es.info() != Eigen::Success) throw NumericError("eigenvalue computation failed");
  Spectrum s(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(s.begin(), s.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return s;
}

Classification classify(const Spectrum& spectrum, double tol, int expected_zeros) {
  double scale = 0.0;
  for (auto z : spectrum) scale = std::max(scale, std::abs(z));
  const double zero_tol = tol * (1.0 + scale);
  for (auto z : spectrum)
    if (z.real() > tol * (1.0 + std::abs(z))) return Classification::unstable;
  int zeros = 0;
  bool all_left = true, all_axis = true, any_imag = false;
  for (auto z : spectrum) {
    if (std::abs(z) <= zero_tol) {
      ++zeros;
      continue;
    }
    all_left = all_left && z.real() < -tol * (1.0 + std::abs(z));
    all_axis = all_axis && !off_axis(z, tol);
    any_imag = any_imag || z.imag() != 0.0;
  }
  if (expected_zeros >= 0 && zeros > expected_zeros) return Classification::degenerate;
  if (zeros == static_cast<int>(spectrum.size())) return Classification::degenerate;
  if (all_left) return Classification::asymptotically_stable;
  if (all_axis && any_imag) return Classification::critically_stable;
  return Classification::degenerate;
}

std::vector<double> frequencies(const Spectrum& spectrum, double tol) {
  double scale = 0.0;
  for (auto z : spectrum) scale = std::max(scale, std::abs(z));
  std::vector<double> out;
  for (auto z : spectrum) {
    if (off_axis(z, tol)) throw PreconditionError("frequencies requested for a spectrum off the imaginary axis");
    if (std::abs(z) > tol * (1.0 + scale) && z.imag() > 0.0) out.push_back(z.imag());
  }
  std::sort(out.begin(), out.end());
  return out;
}

double sumset_distance(const std::vector<double>& signed_freqs, int r) {
  if (r < 1) throw ConfigError("sumset order r must be at least 1");
  const int m = static_cast<int>(signed_freqs.size());
  if (m == 0) return std::numeric_limits<double>::infinity();
  if (enumeration_size(m, r) > kEnumerationCap) throw ConfigError("sumset enumeration exceeds the 1e7 cap");
  std::vector<double> neg;
  for (double a : signed_freqs) neg.push_back(-a);
  std::sort(neg.begin(), neg.end());
  double best = std::numeric_limits<double>::infinity();
  for_each_multiset(m, r, [&](const std::vector<int>& idx) {
    double s = 0.0;
    for (int i : idx) s += signed_freqs[i];
    auto it = std::lower_bound(neg.begin(), neg.end(), s);
    if (it != neg.end()) best = std::min(best, std::abs(*it - s));
    if (it != neg.begin()) best = std::min(best, std::abs(*std::prev(it) - s));
  });
  return best;
}

std::vector<ResonanceFinding> resonance_scan(const std::vector<double>& freqs, int r_max, double resonance_tol) {
  if (r_max < 1) throw ConfigError("r_max must be at least 1");
  const int k = static_cast<int>(freqs.size());
  std::vector<double> value;
  std::vector<int> label;
  for (int j = 0; j < k; ++j) {
    value.push_back(freqs[j]);
    label.push_back(j + 1);
  }
  for (int j = 0; j < k; ++j) {
    value.push_back(-freqs[j]);
    label.push_back(-(j + 1));
  }
  const int m = 2 * k;
  std::vector<ResonanceFinding> out;
  if (m == 0) return out;
  if (enumeration_size(m, r_max) > kEnumerationCap) throw ConfigError("resonance enumeration exceeds the 1e7 cap");
  for (int r = 1; r <= r_max; ++r) {
    std::vector<ResonanceFinding> found;
    ResonanceFinding closest;
    bool have_closest = false;
    for (int l = 0; l < m; ++l) {
      for_each_multiset(m, r, [&](const std::vector<int>& idx) {
        if (std::all_of(idx.begin(), idx.end(), [&](int i) { return i == l; })) return;
        ResonanceFinding f;
        f.r = r;
        f.tuple.push_back(label[l]);
        f.divisor = value[l];
        std::vector<int> balance(k + 1, 0);
        balance[std::abs(label[l])] += label[l] > 0 ? 1 : -1;
        for (int i : idx) {
          f.tuple.push_back(label[i]);
          f.divisor += value[i];
          balance[std::abs(label[i])] += label[i] > 0 ? 1 : -1;
        }
        f.structural = std::all_of(balance.begin(), balance.end(), [](int b) { return b == 0; });
        f.resonant = std::abs(f.divisor) < resonance_tol;
        if (f.resonant) {
          found.push_back(std::move(f));
        } else if (!f.structural && (!have_closest || std::abs(f.divisor) < std::abs(closest.divisor))) {
          closest = std::move(f);
          have_closest = true;
        }
      });
    }
    if (have_closest) found.push_back(std::move(closest));
    std::stable_sort(found.begin(), found.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.divisor) < std::abs(b.divisor); });
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

bool has_nonstructural_resonance(const std::vector<ResonanceFinding>& findings) {
  return std::any_of(findings.begin(), findings.end(), [](const auto& f) { return f.resonant && !f.structural; });
}

std::complex<double> i_integral(int l, const std::vector<int>& idx, double t, const std::vector<std::complex<double>>& A,
                                const std::vector<double>& omega, double resonance_tol) {
  const int m = static_cast<int>(omega.size());
  if (static_cast<int>(A.size()) != m) throw ConfigError("amplitudes and frequencies differ in length");
  auto check = [m](int i) {
    if (i < 0 || i >= m) throw ConfigError("frequency index " + std::to_string(i) + " out of range");
  };
  check(l);
  std::complex<double> amp = omega[l] * A[l];
  double D = omega[l];
  for (int j : idx) {
    check(j);
    amp *= A[j];
    D += omega[j];
  }
  if (std::abs(D) < resonance_tol) return -t * amp;
  const std::complex<double> I(0.0, 1.0);
  // exp(-itD) - 1 in a form that stays accurate for small tD.
  const double a = -t * D;
  const std::complex<double> em1(-2.0 * std::pow(std::sin(a / 2), 2), std::sin(a));
  return I * amp / D * em1;
}

StabilityReport stability_report(const MechSystem& sys, const Eigen::VectorXd& q_c, const StabilityOptions& opts) {
  StabilityReport rep;
  rep.point = PhasePoint{wrap_coordinates(sys, q_c), Eigen::VectorXd::Zero(sys.n)};
  rep.linearization = linearize_extension(sys, q_c, opts.critical_tol);
  rep.spectrum = spectrum_of(rep.linearization.matrix);
  rep.classification = classify(rep.spectrum, opts.tol, 2 * (sys.n - sys.k()));
  const CriticalPoint cp = analyze_point(sys, q_c);
  rep.index = cp.index;
  if (rep.classification == Classification::critically_stable) {
    rep.frequencies = frequencies(rep.spectrum, opts.tol);
    rep.resonances = resonance_scan(rep.frequencies, opts.r_max, opts.resonance_tol);
  }
  rep.index_zero = rep.index == 0;
  rep.no_resonance_to_r =
      rep.classification == Classification::critically_stable && !has_nonstructural_resonance(rep.resonances);
  rep.hypotheses_satisfied = rep.index_zero && rep.no_resonance_to_r;
  return rep;
}

nlohmann::json report_to_json(const StabilityReport& rep, int r_max) {
  nlohmann::json j;
  j["point"] = {{"q", std::vector<double>(rep.point.q.data(), rep.point.q.data() + rep.point.q.size())},
                {"p", std::vector<double>(rep.point.p.data(), rep.point.p.data() + rep.point.p.size())}};
  nlohmann::json spec = nlohmann::json::array();
  for (auto z : rep.spectrum) spec.push_back({z.real(), z.imag()});
  j["spectrum"] = spec;
  j["classification"] = to_string(rep.classification);
  j["frequencies"] = rep.frequencies;
  j["index"] = rep.index >= 0 ? nlohmann::json(rep.index) : nlohmann::json(nullptr);
  nlohmann::json res = nlohmann::json::array();
  for (const auto& f : rep.resonances)
    res.push_back({{"r", f.r}, {"tuple", f.tuple}, {"divisor", f.divisor}, {"resonant", f.resonant},
                   {"structural", f.structural}});
  j["resonances"] = res;
  j["conjecture_hypotheses"] = {{"index_zero", rep.index_zero},
                                {"no_resonance_to_r", rep.no_resonance_to_r},
                                {"r_max", r_max},
                                {"satisfied", rep.hypotheses_satisfied}};
  j["linearization_check"] = {{"fd_deviation", rep.linearization.fd_deviation},
                              {"fd_check_passed", rep.linearization.fd_check_passed},
                              {"block_form_fd_deviation", rep.linearization.block_fd_deviation},
                              {"block_form_on_V_deviation", rep.linearization.block_on_V_deviation}};
  return j;
}

}  // namespace holonome
