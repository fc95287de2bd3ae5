#include "holonome/linalg.hpp"

#include <algorithm>

namespace holonome {

int numerical_rank(const Eigen::MatrixXd& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double rel_tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.cols(), m.rows());
  if (s.size() == 0 || s(0) == 0.0) return out;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) <= rel_tol * s(0)) continue;
    out += svd.matrixV().col(i) * (1.0 / s(i)) * svd.matrixU().col(i).transpose();
  }
  return out;
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& m, double rel_tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const Eigen::Index n = m.cols();
  Eigen::Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0)
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > rel_tol * s(0)) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

Eigen::MatrixXd matrix_sqrt_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw NumericError("matrix_sqrt_spd: matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw NumericError("matrix_sqrt_spd: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError("matrix_sqrt_spd: eigensolver failed");
  const auto& ev = es.eigenvalues();
  if (ev.size() > 0 && !(ev.minCoeff() > 0.0))
    throw NumericError("matrix_sqrt_spd: matrix is not positive definite");
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd symplectic_matrix(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n).setIdentity();
  j.bottomLeftCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
  return j;
}

Eigen::VectorXd periodic_delta(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               const std::vector<bool>& periodic) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Eigen::VectorXd d = b - a;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (static_cast<std::size_t>(i) < periodic.size() && periodic[i]) {
      d(i) = std::remainder(d(i), two_pi);
    }
  }
  return d;
}

double periodic_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                         const std::vector<bool>& periodic) {
  return periodic_delta(a, b, periodic).norm();
}

}  // namespace holonome
