#include "holonome/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numbers>
#include <set>

#include "holonome/format.hpp"

namespace holonome {
namespace {

struct FuncName {
  const char* name;
  Func func;
};
constexpr FuncName kFunctions[] = {
    {"sin", Func::Sin}, {"cos", Func::Cos},   {"tan", Func::Tan}, {"exp", Func::Exp},
    {"log", Func::Log}, {"sqrt", Func::Sqrt}, {"abs", Func::Abs},
};

const char* func_name(Func f) {
  for (const auto& fn : kFunctions)
    if (fn.func == f) return fn.name;
  return "?";
}

class Parser {
 public:
  Parser(std::string_view text, const std::vector<std::string>& coords,
         const std::vector<std::string>& params)
      : text_(text), coords_(coords), params_(params) {}

  std::vector<ExprNode> run(int& root) {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    root = expr();
    skip_ws();
    if (pos_ < text_.size())
      throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return std::move(nodes_);
  }

 private:
  int add(ExprNode n) {
    if (n.lhs >= 0) n.constant = nodes_[n.lhs].constant;
    if (n.rhs >= 0) n.constant = n.constant && nodes_[n.rhs].constant;
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }
  int binary(NodeKind k, int l, int r) {
    ExprNode n;
    n.kind = k;
    n.lhs = l;
    n.rhs = r;
    return add(n);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int expr() {
    int l = term();
    for (;;) {
      if (accept('+'))
        l = binary(NodeKind::Add, l, term());
      else if (accept('-'))
        l = binary(NodeKind::Sub, l, term());
      else
        return l;
    }
  }
  int term() {
    int l = unary();
    for (;;) {
      if (accept('*'))
        l = binary(NodeKind::Mul, l, unary());
      else if (accept('/'))
        l = binary(NodeKind::Div, l, unary());
      else
        return l;
    }
  }
  int unary() {
    if (accept('-')) {
      ExprNode n;
      n.kind = NodeKind::Negate;
      n.lhs = unary();
      return add(n);
    }
    return power();
  }
  int power() {
    int base = primary();
    if (accept('^')) return binary(NodeKind::Pow, base, unary());
    return base;
  }
  int primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      int inner = expr();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }
  int number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        digits();
      else
        pos_ = save;
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc() || ptr != text_.data() + pos_) throw ParseError("malformed number", start);
    ExprNode n;
    n.kind = NodeKind::Number;
    n.number = value;
    return add(n);
  }
  int identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string name(text_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      for (const auto& fn : kFunctions) {
        if (name == fn.name) {
          ++pos_;
          ExprNode n;
          n.kind = NodeKind::Call;
          n.func = fn.func;
          n.lhs = expr();
          if (!accept(')')) throw ParseError("expected ')'", pos_);
          return add(n);
        }
      }
      throw UnknownIdentifierError(name, start);
    }
    ExprNode n;
    if (auto it = std::find(coords_.begin(), coords_.end(), name); it != coords_.end()) {
      n.kind = NodeKind::Coordinate;
      n.index = static_cast<int>(it - coords_.begin());
      n.constant = false;
    } else if (auto jt = std::find(params_.begin(), params_.end(), name); jt != params_.end()) {
      n.kind = NodeKind::Parameter;
      n.index = static_cast<int>(jt - params_.begin());
    } else if (name == "pi") {
      n.kind = NodeKind::Number;
      n.number = std::numbers::pi;
    } else {
      throw UnknownIdentifierError(name, start);
    }
    return add(n);
  }

  std::string_view text_;
  const std::vector<std::string>& coords_;
  const std::vector<std::string>& params_;
  std::size_t pos_ = 0;
  std::vector<ExprNode> nodes_;
};

}  // namespace

Expression parse(std::string_view text, const std::vector<std::string>& coords,
                 const std::vector<std::string>& params) {
  Parser p(text, coords, params);
  Expression e;
  int root = -1;
  e.nodes_ = std::make_shared<const std::vector<ExprNode>>(p.run(root));
  e.root_ = root;
  e.coords_ = coords;
  e.params_ = params;
  return e;
}

std::vector<std::string> Expression::used_coordinates() const {
  std::set<int> idx;
  if (nodes_)
    for (const auto& n : *nodes_)
      if (n.kind == NodeKind::Coordinate) idx.insert(n.index);
  std::vector<std::string> out;
  for (int i : idx) out.push_back(coords_[i]);
  return out;
}

std::vector<std::string> Expression::used_parameters() const {
  std::set<int> idx;
  if (nodes_)
    for (const auto& n : *nodes_)
      if (n.kind == NodeKind::Parameter) idx.insert(n.index);
  std::vector<std::string> out;
  for (int i : idx) out.push_back(params_[i]);
  return out;
}

std::string Expression::node_to_string(int i) const {
  const ExprNode& n = (*nodes_)[i];
  switch (n.kind) {
    case NodeKind::Number:
      return format_double(n.number);
    case NodeKind::Coordinate:
      return coords_[n.index];
    case NodeKind::Parameter:
      return params_[n.index];
    case NodeKind::Negate:
      return "(-" + node_to_string(n.lhs) + ")";
    case NodeKind::Call:
      return std::string(func_name(n.func)) + "(" + node_to_string(n.lhs) + ")";
    default:
      break;
  }
  const char* op = n.kind == NodeKind::Add   ? " + "
                   : n.kind == NodeKind::Sub ? " - "
                   : n.kind == NodeKind::Mul ? " * "
                   : n.kind == NodeKind::Div ? " / "
                                             : " ^ ";
  return "(" + node_to_string(n.lhs) + op + node_to_string(n.rhs) + ")";
}

std::string Expression::to_string() const { return nodes_ ? node_to_string(root_) : std::string(); }

bool Expression::node_equal(int i, const Expression& o, int j) const {
  const ExprNode& a = (*nodes_)[i];
  const ExprNode& b = (*o.nodes_)[j];
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Number:
      return a.number == b.number;
    case NodeKind::Coordinate:
      return coords_[a.index] == o.coords_[b.index];
    case NodeKind::Parameter:
      return params_[a.index] == o.params_[b.index];
    case NodeKind::Negate:
      return node_equal(a.lhs, o, b.lhs);
    case NodeKind::Call:
      return a.func == b.func && node_equal(a.lhs, o, b.lhs);
    default:
      return node_equal(a.lhs, o, b.lhs) && node_equal(a.rhs, o, b.rhs);
  }
}

bool Expression::structurally_equal(const Expression& other) const {
  if (!nodes_ || !other.nodes_) return !nodes_ && !other.nodes_;
  return node_equal(root_, other, other.root_);
}

std::vector<double> Expression::bind(const ParamMap& values) const {
  std::vector<double> out;
  out.reserve(params_.size());
  for (const auto& name : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("no value for parameter '" + name + "'");
    out.push_back(it->second);
  }
  return out;
}

double eval(const Expression& e, std::span<const double> q, const ParamMap& params) {
  const auto bound = e.bind(params);
  return e.evaluate<double>(q, bound);
}

Eigen::VectorXd grad_bound(const Expression& e, std::span<const double> q,
                           std::span<const double> params) {
  const auto g = gradient_at<double>(e, q, params);
  return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

Eigen::MatrixXd hessian_bound(const Expression& e, std::span<const double> q,
                              std::span<const double> params) {
  const std::size_t n = q.size();
  std::vector<D1> x;
  x.reserve(n);
  for (std::size_t i = 0; i < n; ++i) x.push_back(D1::variable(q[i], i, n));
  const auto g = gradient_at<D1>(e, std::span<const D1>(x), params);
  Eigen::MatrixXd h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h(i, j) = g[i].partial(j);
  return 0.5 * (h + h.transpose());
}

Eigen::VectorXd grad(const Expression& e, std::span<const double> q, const ParamMap& params) {
  const auto bound = e.bind(params);
  return grad_bound(e, q, bound);
}

Eigen::MatrixXd hessian(const Expression& e, std::span<const double> q, const ParamMap& params) {
  const auto bound = e.bind(params);
  return hessian_bound(e, q, bound);
}

}  // namespace holonome
