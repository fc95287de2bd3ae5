#pragma once

// The critical set C_Q = { q : rho^T(q) dU(q) = 0 }: Newton refinement,
// multistart search, index, continuation of one-dimensional components.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "holonome/mechsys.hpp"

namespace holonome {

struct CriticalPoint {
  Eigen::VectorXd q;
  double residual = 0.0;    // |rho^T dU|
  Eigen::MatrixXd jac;      // D(rho^T dU), n x n
  int kernel_dim = 0;
  bool generic = false;     // rank(jac) == k
  int index = -1;           // -1 when undefined (non-generic)
  int iterations = 0;       // Newton iterations spent
};

struct NewtonOptions {
  double tol = 1e-12;
  int max_iter = 50;
};

/// rho^T(q) dU(q); zero iff q lies on C_Q.
Eigen::VectorXd critical_residual(const MechSystem& sys, const Eigen::VectorXd& q);
/// D(rho^T dU) at q, exact (nested duals).
Eigen::MatrixXd critical_jacobian(const MechSystem& sys, const Eigen::VectorXd& q);

/// Residual, Jacobian, kernel dimension, genericity and (if generic) index
/// at q. Coordinates are stored wrapped.
CriticalPoint analyze_point(const MechSystem& sys, const Eigen::VectorXd& q);

/// Damped Gauss-Newton on rho^T dU with the rank-k truncated pseudo-inverse.
/// Throws NoConvergenceError after max_iter or on divergence (residual
/// doubling five iterations in a row).
CriticalPoint newton_refine(const MechSystem& sys, const Eigen::VectorXd& q0, const NewtonOptions& opts = {});

/// Zeros of dU by multistart Newton from a uniform grid over the search box
/// (periodic coordinates: [0, 2 pi) without the duplicate endpoint).
/// Deduplicated at 1e-6 (periodic-aware) and sorted lexicographically.
/// Throws NumericError("potential is degenerate") when a zero has a singular
/// Hessian.
std::vector<CriticalPoint> find_U_critical_points(const MechSystem& sys, int grid_per_dim,
                                                  const NewtonOptions& opts = {}, int threads = 0);

/// Number of eigenvalues of g^-1 D(rho^T dU) with negative real part once the
/// n-k kernel eigenvalues are removed: the unstable normal directions of the
/// descent flow q' = -rho g^-1 dU. Throws PreconditionError("index undefined")
/// on non-generic points.
int component_index(const MechSystem& sys, const CriticalPoint& cp);

struct ContinuationOptions {
  double step = 1e-2;
  long max_points = 100000;
  int orientation = 1;      // +1 / -1 along the canonical kernel direction
  NewtonOptions newton;
};

struct CriticalComponent {
  std::vector<CriticalPoint> points;   // ordered along the curve
  int index = -1;
  bool closed = false;
  bool nongeneric_boundary = false;    // stopped at a rank drop or index jump
  double arc_length = 0.0;
  std::string warning;
};

/// Predictor along the unit kernel vector, corrector newton_refine.
/// Zero-dimensional components (n = k) come back as a closed single point.
/// Throws PreconditionError on a non-generic seed or components of dimension
/// above one, NumericError when max_points is exceeded.
CriticalComponent continue_component(const MechSystem& sys, const CriticalPoint& seed,
                                     const ContinuationOptions& opts = {});

/// Distance from q to the polyline through the component (periodic-aware).
double distance_to_component(const MechSystem& sys, const CriticalComponent& c, const Eigen::VectorXd& q);
/// Symmetric Hausdorff distance between the point sets of two components.
double hausdorff_distance(const MechSystem& sys, const CriticalComponent& a, const CriticalComponent& b);

/// Orthonormalized zeta columns at q: a basis of the fibre of the critical
/// bundle. Throws PreconditionError when |rho^T dU| > 1e-8.
std::vector<Eigen::VectorXd> critical_bundle_fibre(const MechSystem& sys, const Eigen::VectorXd& q);

struct NongenericityReport {
  bool nongeneric = false;   // rank(jac) < k
  double sigma_ratio = 0.0;  // sigma_k / sigma_max
};
NongenericityReport nongenericity_indicator(const MechSystem& sys, const CriticalPoint& cp);

struct ManifoldResult {
  std::vector<CriticalPoint> seeds;        // refined, lexicographic order
  std::vector<CriticalComponent> components;
};

/// Refines every seed, continues each in parallel and keeps the components
/// whose seed is not already on an earlier one (lexicographic seed order).
ManifoldResult build_critical_manifold(const MechSystem& sys, const std::vector<Eigen::VectorXd>& seeds,
                                       const ContinuationOptions& opts = {}, int threads = 0);

/// HOLONOME_THREADS if set and positive, else hardware concurrency.
int default_thread_count();

nlohmann::json critical_point_to_json(const CriticalPoint& cp);
nlohmann::json component_to_json(const MechSystem& sys, const CriticalComponent& c, int component_id,
                                 const std::string& model);
/// Flat CSV: component_id, index, q_1..q_n, residual.
void write_components_csv(std::ostream& out, const MechSystem& sys, const std::vector<CriticalComponent>& comps);

}  // namespace holonome
