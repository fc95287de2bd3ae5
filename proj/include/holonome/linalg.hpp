#pragma once

// Small dense matrices over a generic scalar (double or a dual type), plus
// the double-only decompositions the rest of the library relies on.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "holonome/dual.hpp"
#include "holonome/errors.hpp"

namespace holonome {

/// Relative singular-value threshold used for every rank decision.
inline constexpr double kRankTolerance = 1e-9;

template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows * cols), T(0.0)) {}

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  T& operator()(int i, int j) { return a_[static_cast<std::size_t>(i * cols_ + j)]; }
  const T& operator()(int i, int j) const { return a_[static_cast<std::size_t>(i * cols_ + j)]; }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend Mat operator*(const Mat& a, const Mat& b) {
    Mat c(a.rows_, b.cols_);
    for (int i = 0; i < a.rows_; ++i)
      for (int k = 0; k < a.cols_; ++k) {
        const T& aik = a(i, k);
        for (int j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }
  friend Mat operator+(Mat a, const Mat& b) {
    for (std::size_t i = 0; i < a.a_.size(); ++i) a.a_[i] += b.a_[i];
    return a;
  }
  friend Mat operator-(Mat a, const Mat& b) {
    for (std::size_t i = 0; i < a.a_.size(); ++i) a.a_[i] -= b.a_[i];
    return a;
  }
  friend Mat operator-(Mat a) {
    for (auto& x : a.a_) x = -x;
    return a;
  }
  friend Mat operator*(double s, Mat a) {
    for (auto& x : a.a_) x = s * x;
    return a;
  }

  std::vector<T> operator*(std::span<const T> v) const {
    std::vector<T> out(static_cast<std::size_t>(rows_), T(0.0));
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) out[i] += (*this)(i, j) * v[j];
    return out;
  }

  std::vector<T> column(int j) const {
    std::vector<T> c(static_cast<std::size_t>(rows_));
    for (int i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> a_;
};

template <class T>
Eigen::MatrixXd values(const Mat<T>& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) = value_of(m(i, j));
  return out;
}

inline Mat<double> from_eigen(const Eigen::MatrixXd& m) {
  Mat<double> out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

template <class T>
Mat<T> promote(const Eigen::MatrixXd& m) {
  Mat<T> out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) = T(m(i, j));
  return out;
}

/// Inverse of a symmetric positive definite matrix by Cholesky. Throws
/// NumericError if a pivot is not positive.
template <class T>
Mat<T> spd_inverse(const Mat<T>& g) {
  using std::sqrt;
  const int n = g.rows();
  Mat<T> l(n, n);
  for (int j = 0; j < n; ++j) {
    T s = g(j, j);
    for (int k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (!(value_of(s) > 0.0)) throw NumericError("matrix is not symmetric positive definite");
    l(j, j) = sqrt(s);
    for (int i = j + 1; i < n; ++i) {
      T t = g(i, j);
      for (int k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  // inv(L) by forward substitution, then inv(g) = inv(L)^T inv(L).
  Mat<T> li(n, n);
  for (int j = 0; j < n; ++j) {
    li(j, j) = T(1.0) / l(j, j);
    for (int i = j + 1; i < n; ++i) {
      T s(0.0);
      for (int k = j; k < i; ++k) s -= l(i, k) * li(k, j);
      li(i, j) = s / l(i, i);
    }
  }
  return li.transpose() * li;
}

/// Number of singular values above kRankTolerance * sigma_max.
int numerical_rank(const Eigen::MatrixXd& m, double rel_tol = kRankTolerance);

/// Moore-Penrose pseudo-inverse keeping singular values above
/// rel_tol * sigma_max.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double rel_tol = kRankTolerance);

/// Orthonormal basis (columns) of the right null space: right singular vectors
/// whose singular values fall at or below rel_tol * sigma_max.
Eigen::MatrixXd null_space(const Eigen::MatrixXd& m, double rel_tol = kRankTolerance);

/// Symmetric square root by eigendecomposition. Throws NumericError when the
/// input is not symmetric positive definite.
Eigen::MatrixXd matrix_sqrt_spd(const Eigen::MatrixXd& m);

/// The chart symplectic matrix [[0, 1], [-1, 0]] of size 2n.
Eigen::MatrixXd symplectic_matrix(int n);

inline double wrap_angle(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(x, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r = 0.0;
  return r;
}

/// Per-coordinate difference b - a, folded into (-pi, pi] where periodic.
Eigen::VectorXd periodic_delta(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               const std::vector<bool>& periodic);
double periodic_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                         const std::vector<bool>& periodic);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace holonome
