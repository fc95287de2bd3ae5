#pragma once

// Scalar-field expressions over a fixed coordinate chart.
//
// Grammar (lowest to highest precedence):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | identifier | identifier '(' expr ')' | '(' expr ')'
//
// Identifiers resolve to a coordinate, then a parameter, then the constant
// `pi`. Functions: sin cos tan exp log sqrt abs. Angles are radians.

#include <cmath>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "holonome/dual.hpp"
#include "holonome/errors.hpp"

namespace holonome {

using ParamMap = std::map<std::string, double>;

enum class NodeKind { Number, Coordinate, Parameter, Negate, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Sin, Cos, Tan, Exp, Log, Sqrt, Abs };

struct ExprNode {
  NodeKind kind = NodeKind::Number;
  double number = 0.0;
  int index = -1;  // coordinate or parameter slot
  Func func = Func::Sin;
  int lhs = -1;
  int rhs = -1;
  bool constant = true;  // subtree independent of the coordinates
};

class Expression {
 public:
  Expression() = default;

  /// Evaluates at `q` with parameter values aligned to `parameter_names()`.
  template <class T>
  T evaluate(std::span<const T> q, std::span<const double> params) const;

  const std::vector<std::string>& coordinate_names() const { return coords_; }
  const std::vector<std::string>& parameter_names() const { return params_; }

  /// Names of coordinates / parameters that actually occur in the tree.
  std::vector<std::string> used_coordinates() const;
  std::vector<std::string> used_parameters() const;

  /// Fully parenthesised text that parses back to the same tree.
  std::string to_string() const;

  bool structurally_equal(const Expression& other) const;

  bool is_constant() const { return nodes_ && (*nodes_)[root_].constant; }
  std::size_t node_count() const { return nodes_ ? nodes_->size() : 0; }

  /// Binds a value map to the parameter slot order. Throws ConfigError on a
  /// missing parameter.
  std::vector<double> bind(const ParamMap& values) const;

 private:
  friend Expression parse(std::string_view, const std::vector<std::string>&,
                          const std::vector<std::string>&);
  template <class T>
  T eval_node(int i, std::span<const T> q, std::span<const double> params) const;
  std::string node_to_string(int i) const;
  bool node_equal(int i, const Expression& o, int j) const;

  std::shared_ptr<const std::vector<ExprNode>> nodes_;
  int root_ = -1;
  std::vector<std::string> coords_;
  std::vector<std::string> params_;
};

Expression parse(std::string_view text, const std::vector<std::string>& coords,
                 const std::vector<std::string>& params);

double eval(const Expression& e, std::span<const double> q, const ParamMap& params);
Eigen::VectorXd grad(const Expression& e, std::span<const double> q, const ParamMap& params);
Eigen::MatrixXd hessian(const Expression& e, std::span<const double> q, const ParamMap& params);

// Bound-parameter variants used on hot paths.
Eigen::VectorXd grad_bound(const Expression& e, std::span<const double> q,
                           std::span<const double> params);
Eigen::MatrixXd hessian_bound(const Expression& e, std::span<const double> q,
                              std::span<const double> params);

/// Gradient of `e` evaluated at a point whose entries are themselves of
/// scalar type T; the result keeps T's derivative information.
template <class T>
std::vector<T> gradient_at(const Expression& e, std::span<const T> q,
                           std::span<const double> params) {
  const std::size_t n = q.size();
  std::vector<Dual<T>> x;
  x.reserve(n);
  for (std::size_t i = 0; i < n; ++i) x.push_back(Dual<T>::variable(q[i], i, n));
  Dual<T> r = e.evaluate<Dual<T>>(x, params);
  std::vector<T> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = r.partial(i);
  return g;
}

// ---------------------------------------------------------------------------

template <class T>
T Expression::evaluate(std::span<const T> q, std::span<const double> params) const {
  if (!nodes_) throw DomainError("evaluating an empty expression");
  if (q.size() != coords_.size())
    throw DomainError("coordinate vector has length " + std::to_string(q.size()) + ", expected " +
                      std::to_string(coords_.size()));
  T r = eval_node<T>(root_, q, params);
  if (!all_finite(r)) throw DomainError("expression produced a non-finite value: " + to_string());
  return r;
}

template <class T>
T Expression::eval_node(int i, std::span<const T> q, std::span<const double> params) const {
  using std::abs, std::cos, std::exp, std::log, std::pow, std::sin, std::sqrt, std::tan;
  const ExprNode& n = (*nodes_)[i];
  switch (n.kind) {
    case NodeKind::Number:
      return T(n.number);
    case NodeKind::Coordinate:
      return q[n.index];
    case NodeKind::Parameter:
      if (static_cast<std::size_t>(n.index) >= params.size())
        throw DomainError("parameter '" + params_[n.index] + "' is unbound");
      return T(params[n.index]);
    case NodeKind::Negate:
      return -eval_node<T>(n.lhs, q, params);
    case NodeKind::Add:
      return eval_node<T>(n.lhs, q, params) + eval_node<T>(n.rhs, q, params);
    case NodeKind::Sub:
      return eval_node<T>(n.lhs, q, params) - eval_node<T>(n.rhs, q, params);
    case NodeKind::Mul:
      return eval_node<T>(n.lhs, q, params) * eval_node<T>(n.rhs, q, params);
    case NodeKind::Div: {
      T den = eval_node<T>(n.rhs, q, params);
      if (value_of(den) == 0.0) throw DomainError("division by zero in " + node_to_string(i));
      return eval_node<T>(n.lhs, q, params) / den;
    }
    case NodeKind::Pow: {
      T base = eval_node<T>(n.lhs, q, params);
      const double b = value_of(base);
      if ((*nodes_)[n.rhs].constant) {
        const double c = value_of(eval_node<double>(n.rhs, std::span<const double>{}, params));
        if (b < 0.0 && c != std::floor(c))
          throw DomainError("negative base with non-integer exponent in " + node_to_string(i));
        if (b == 0.0 && c < 0.0) throw DomainError("division by zero in " + node_to_string(i));
        if (c == 0.0) return T(1.0);
        if (c == 1.0) return base;
        if (c == 2.0) return base * base;
        return pow(base, c);
      }
      if (b <= 0.0) throw DomainError("non-positive base with variable exponent in " + node_to_string(i));
      return exp(eval_node<T>(n.rhs, q, params) * log(base));
    }
    case NodeKind::Call: {
      T a = eval_node<T>(n.lhs, q, params);
      const double x = value_of(a);
      switch (n.func) {
        case Func::Sin:
          return sin(a);
        case Func::Cos:
          return cos(a);
        case Func::Tan:
          return tan(a);
        case Func::Exp:
          return exp(a);
        case Func::Log:
          if (x <= 0.0) throw DomainError("log of non-positive value in " + node_to_string(i));
          return log(a);
        case Func::Sqrt:
          if (x < 0.0) throw DomainError("sqrt of negative value in " + node_to_string(i));
          return sqrt(a);
        case Func::Abs:
          return abs(a);
      }
    }
  }
  throw DomainError("corrupt expression node");
}

}  // namespace holonome
