#pragma once

// Linearization of the extension at points (q_c, 0) of the critical bundle,
// spectral classification, frequencies, and the small-divisor diagnostics.

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "holonome/mechsys.hpp"

namespace holonome {

enum class Classification { asymptotically_stable, unstable, critically_stable, degenerate };
std::string to_string(Classification c);

struct Linearization {
  /// Exact Jacobian of the extension field at (q_c, 0), assembled blockwise:
  /// [[0, rho g^-1 rho^T], [-(rho^T D2U rho + R) - D(rho^T dU) rho_bar, 0]].
  Eigen::MatrixXd matrix;
  /// The textbook form [[0, rho g^-1 rho^T], [-(rho^T D2U rho + R), 0]],
  /// equal to matrix * pi_V, i.e. the linearization restricted to V.
  Eigen::MatrixXd block_form;
  /// R_jk = dU_i rho^r_j rho^s_k d_s rho^i_r.
  Eigen::MatrixXd R;
  /// Central differences of extension_field, h = 1e-6 (1 + |x_i|).
  Eigen::MatrixXd finite_difference;
  Eigen::MatrixXd piV;
  double fd_deviation = 0.0;          // max |matrix - FD|
  double block_fd_deviation = 0.0;    // max |block_form - FD|
  double block_on_V_deviation = 0.0;  // max |block_form - FD * pi_V|
  bool fd_check_passed = false;       // fd_deviation <= 1e-5
};

/// Throws PreconditionError when |rho^T dU(q_c)| > critical_tol.
Linearization linearize_extension(const MechSystem& sys, const Eigen::VectorXd& q_c, double critical_tol = 1e-8);

using Spectrum = std::vector<std::complex<double>>;

/// Eigenvalues sorted by (real, imag).
Spectrum spectrum_of(const Eigen::MatrixXd& m);

/// Zero: |lambda| <= tol (1 + max |lambda|). Imaginary axis: |Re| <= tol (1 + |lambda|).
/// unstable if some Re > tol (1 + |lambda|); degenerate if more than
/// `expected_zeros` zero eigenvalues (ignored when negative) or none nonzero;
/// asymptotically_stable if every nonzero Re < -tol (1 + |lambda|);
/// critically_stable if every nonzero one is on the imaginary axis.
Classification classify(const Spectrum& spectrum, double tol = 1e-8, int expected_zeros = -1);

/// |Im| of the nonzero imaginary-axis eigenvalues with Im > 0, ascending,
/// multiplicity kept. Throws PreconditionError if some eigenvalue is off the
/// imaginary axis.
std::vector<double> frequencies(const Spectrum& spectrum, double tol = 1e-8);

/// inf |a - b| over a in the r-fold sumset of `signed_freqs`, b in -signed_freqs.
/// Throws ConfigError when |A|^r exceeds 1e7.
double sumset_distance(const std::vector<double>& signed_freqs, int r);

/// Signed mode labels: +j stands for omega_j, -j for -omega_j (1-based).
struct ResonanceFinding {
  int r = 0;
  std::vector<int> tuple;   // (l; i_1..i_r)
  double divisor = 0.0;     // omega_l + sum omega_{i_m}
  bool resonant = false;    // |divisor| < tol
  bool structural = false;  // every mode appears equally often with both signs
};

/// Scans r = 1..r_max over the signed set {+-omega_j}. Tuples with all entries
/// equal are skipped. Reports every resonant tuple and, per r, the closest
/// non-structural non-resonant one; sorted by (r, |divisor|).
std::vector<ResonanceFinding> resonance_scan(const std::vector<double>& freqs, int r_max,
                                             double resonance_tol = 1e-6);
bool has_nonstructural_resonance(const std::vector<ResonanceFinding>& findings);

/// I_{l; j_1..j_r}(t) = i omega_l A_l prod A_j (exp(-i t D) - 1) / D with
/// D = omega_l + sum omega_j (0-based indices into omega and A). For |D| below
/// resonance_tol the resonant branch -t omega_l A_l prod A_j is returned.
std::complex<double> i_integral(int l, const std::vector<int>& idx, double t,
                                const std::vector<std::complex<double>>& A, const std::vector<double>& omega,
                                double resonance_tol = 1e-6);

struct StabilityOptions {
  int r_max = 3;
  double tol = 1e-8;
  double resonance_tol = 1e-6;
  double critical_tol = 1e-8;
};

struct StabilityReport {
  PhasePoint point;
  Linearization linearization;
  Spectrum spectrum;
  Classification classification = Classification::degenerate;
  std::vector<double> frequencies;
  int index = -1;
  std::vector<ResonanceFinding> resonances;
  bool index_zero = false;
  bool no_resonance_to_r = false;
  bool hypotheses_satisfied = false;  // critically stable, index 0, no resonance up to r_max
};

StabilityReport stability_report(const MechSystem& sys, const Eigen::VectorXd& q_c, const StabilityOptions& opts = {});
nlohmann::json report_to_json(const StabilityReport& rep, int r_max);

}  // namespace holonome
