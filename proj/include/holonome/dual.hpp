#pragma once

// Forward-mode dual numbers with a dynamic number of partials.
//
// Dual<double> carries first derivatives; Dual<Dual<double>> carries second
// derivatives and so on. An empty partials vector stands for "all zero", so
// constants promoted into a dual context cost nothing.

#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

namespace holonome {

template <class T>
class Dual;

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

template <class T>
class Dual {
 public:
  using value_type = T;

  T v{};
  std::vector<T> d;

  Dual() = default;
  Dual(const T& value) : v(value) {}  // NOLINT(google-explicit-constructor)
  Dual(const T& value, std::vector<T> partials) : v(value), d(std::move(partials)) {}
  template <class U = T>
    requires(!std::is_same_v<U, double>)
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  /// Variable number `index` out of `n`, seeded with a unit partial.
  static Dual variable(const T& value, std::size_t index, std::size_t n) {
    Dual r(value);
    r.d.assign(n, T(0.0));
    r.d[index] = T(1.0);
    return r;
  }

  T partial(std::size_t i) const { return i < d.size() ? d[i] : T(0.0); }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    accumulate(d, o.d, 1.0);
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    accumulate(d, o.d, -1.0);
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  friend Dual operator-(const Dual& a) {
    Dual r(-a.v);
    r.d.reserve(a.d.size());
    for (const auto& x : a.d) r.d.push_back(-x);
    return r;
  }
  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    const std::size_t n = std::max(a.d.size(), b.d.size());
    if (n == 0) return r;
    r.d.assign(n, T(0.0));
    for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] += b.v * a.d[i];
    for (std::size_t i = 0; i < b.d.size(); ++i) r.d[i] += a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const T q = a.v / b.v;
    Dual r(q);
    const std::size_t n = std::max(a.d.size(), b.d.size());
    if (n == 0) return r;
    r.d.assign(n, T(0.0));
    for (std::size_t i = 0; i < a.d.size(); ++i) r.d[i] += a.d[i];
    for (std::size_t i = 0; i < b.d.size(); ++i) r.d[i] -= q * b.d[i];
    for (auto& x : r.d) x = x / b.v;
    return r;
  }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }

 private:
  static void accumulate(std::vector<T>& dst, const std::vector<T>& src, double sign) {
    if (src.empty()) return;
    if (dst.size() < src.size()) dst.resize(src.size(), T(0.0));
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += sign * src[i];
  }
};

template <class T>
Dual<T> operator*(double c, const Dual<T>& a) {
  Dual<T> r(c * a.v);
  r.d.reserve(a.d.size());
  for (const auto& x : a.d) r.d.push_back(c * x);
  return r;
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double c) {
  return c * a;
}
template <class T>
Dual<T> operator+(const Dual<T>& a, double c) {
  Dual<T> r = a;
  r.v += c;
  return r;
}
template <class T>
Dual<T> operator+(double c, const Dual<T>& a) {
  return a + c;
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double c) {
  return a + (-c);
}
template <class T>
Dual<T> operator-(double c, const Dual<T>& a) {
  return (-a) + c;
}
template <class T>
Dual<T> operator/(const Dual<T>& a, double c) {
  return a * (1.0 / c);
}
template <class T>
Dual<T> operator/(double c, const Dual<T>& a) {
  return Dual<T>(T(c)) / a;
}

namespace detail {
// r = f(a) given f(a.v) and f'(a.v).
template <class T>
Dual<T> chain(const Dual<T>& a, T value, const T& slope) {
  Dual<T> r(std::move(value));
  r.d.reserve(a.d.size());
  for (const auto& x : a.d) r.d.push_back(slope * x);
  return r;
}
}  // namespace detail

// Scalar math is found by ADL for duals and via std for double.
template <class T>
Dual<T> sin(const Dual<T>& a) {
  using std::cos, std::sin;
  return detail::chain(a, sin(a.v), cos(a.v));
}
template <class T>
Dual<T> cos(const Dual<T>& a) {
  using std::cos, std::sin;
  return detail::chain(a, cos(a.v), -sin(a.v));
}
template <class T>
Dual<T> tan(const Dual<T>& a) {
  using std::tan;
  T t = tan(a.v);
  return detail::chain(a, t, T(1.0) + t * t);
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  T e = exp(a.v);
  return detail::chain(a, e, e);
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return detail::chain(a, log(a.v), T(1.0) / a.v);
}
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  T s = sqrt(a.v);
  return detail::chain(a, s, 0.5 / s);
}
template <class T>
Dual<T> pow(const Dual<T>& a, double c) {
  using std::pow;
  return detail::chain(a, pow(a.v, c), c * pow(a.v, c - 1.0));
}

inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.v);
}

inline bool all_finite(double x) { return std::isfinite(x); }
template <class T>
bool all_finite(const Dual<T>& x) {
  if (!all_finite(x.v)) return false;
  for (const auto& p : x.d)
    if (!all_finite(p)) return false;
  return true;
}

template <class T>
Dual<T> abs(const Dual<T>& a) {
  return value_of(a) < 0.0 ? -a : a;
}

using D1 = Dual<double>;
using D2 = Dual<D1>;

}  // namespace holonome
