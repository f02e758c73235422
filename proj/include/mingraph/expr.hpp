#pragma once

// Tiny closed-form expression grammar for boundary data: polynomials,
// trig, exp, log, sqrt of the coordinates.  Expressions are parsed into an
// AST that supports exact symbolic differentiation, so gradients and
// Hessians of configured data are analytic, not finite-differenced.
//
// Grammar (coordinates are x, y, z, w or x1..x4):
//   expr    := term (('+'|'-') term)*
//   term    := factor (('*'|'/') factor)*
//   factor  := ('-'|'+') factor | power
//   power   := atom ('^' factor)?
//   atom    := number | coord | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//   func    := sin cos tan sinh cosh tanh exp log sqrt abs

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mingraph/smallmat.hpp"

namespace mingraph {

class ExprError : public std::runtime_error {
 public:
  explicit ExprError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

enum class NodeKind { kConst, kVar, kAdd, kSub, kMul, kDiv, kPow, kNeg, kFunc };

struct ExprNode {
  NodeKind kind;
  double value = 0.0;          // kConst
  int var = 0;                 // kVar
  std::string func;            // kFunc
  std::shared_ptr<const ExprNode> a, b;
};

using NodePtr = std::shared_ptr<const ExprNode>;

inline NodePtr make_const(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::kConst;
  n->value = v;
  return n;
}

inline bool is_const(const NodePtr& n, double v) {
  return n->kind == NodeKind::kConst && n->value == v;
}

inline NodePtr make_binary(NodeKind kind, NodePtr a, NodePtr b) {
  // Light constant folding keeps derivative trees from ballooning.
  if (a->kind == NodeKind::kConst && b->kind == NodeKind::kConst) {
    switch (kind) {
      case NodeKind::kAdd: return make_const(a->value + b->value);
      case NodeKind::kSub: return make_const(a->value - b->value);
      case NodeKind::kMul: return make_const(a->value * b->value);
      case NodeKind::kDiv: return make_const(a->value / b->value);
      case NodeKind::kPow: return make_const(std::pow(a->value, b->value));
      default: break;
    }
  }
  if (kind == NodeKind::kAdd) {
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
  }
  if (kind == NodeKind::kSub && is_const(b, 0.0)) return a;
  if (kind == NodeKind::kMul) {
    if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
  }
  if (kind == NodeKind::kDiv && is_const(a, 0.0)) return make_const(0.0);
  if (kind == NodeKind::kPow && is_const(b, 1.0)) return a;
  auto n = std::make_shared<ExprNode>();
  n->kind = kind;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline NodePtr make_neg(NodePtr a) {
  if (a->kind == NodeKind::kConst) return make_const(-a->value);
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::kNeg;
  n->a = std::move(a);
  return n;
}

inline NodePtr make_func(const std::string& f, NodePtr a) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::kFunc;
  n->func = f;
  n->a = std::move(a);
  return n;
}

inline double eval_node(const ExprNode& n, const Vec& x) {
  switch (n.kind) {
    case NodeKind::kConst: return n.value;
    case NodeKind::kVar:
      if (n.var >= x.n) throw ExprError("coordinate index out of range for this dimension");
      return x[n.var];
    case NodeKind::kAdd: return eval_node(*n.a, x) + eval_node(*n.b, x);
    case NodeKind::kSub: return eval_node(*n.a, x) - eval_node(*n.b, x);
    case NodeKind::kMul: return eval_node(*n.a, x) * eval_node(*n.b, x);
    case NodeKind::kDiv: return eval_node(*n.a, x) / eval_node(*n.b, x);
    case NodeKind::kPow: return std::pow(eval_node(*n.a, x), eval_node(*n.b, x));
    case NodeKind::kNeg: return -eval_node(*n.a, x);
    case NodeKind::kFunc: {
      const double v = eval_node(*n.a, x);
      if (n.func == "sin") return std::sin(v);
      if (n.func == "cos") return std::cos(v);
      if (n.func == "tan") return std::tan(v);
      if (n.func == "sinh") return std::sinh(v);
      if (n.func == "cosh") return std::cosh(v);
      if (n.func == "tanh") return std::tanh(v);
      if (n.func == "exp") return std::exp(v);
      if (n.func == "log") return std::log(v);
      if (n.func == "sqrt") return std::sqrt(v);
      if (n.func == "abs") return std::fabs(v);
      throw ExprError("unknown function: " + n.func);
    }
  }
  throw ExprError("corrupt expression node");
}

inline NodePtr diff_node(const NodePtr& n, int var);

inline NodePtr diff_func(const NodePtr& n, int var) {
  const NodePtr& u = n->a;
  NodePtr du = diff_node(u, var);
  if (is_const(du, 0.0)) return make_const(0.0);
  const std::string& f = n->func;
  NodePtr outer;
  if (f == "sin") outer = make_func("cos", u);
  else if (f == "cos") outer = make_neg(make_func("sin", u));
  else if (f == "tan") outer = make_binary(NodeKind::kDiv, make_const(1.0),
                                           make_binary(NodeKind::kPow, make_func("cos", u), make_const(2.0)));
  else if (f == "sinh") outer = make_func("cosh", u);
  else if (f == "cosh") outer = make_func("sinh", u);
  else if (f == "tanh") outer = make_binary(NodeKind::kSub, make_const(1.0),
                                            make_binary(NodeKind::kPow, make_func("tanh", u), make_const(2.0)));
  else if (f == "exp") outer = make_func("exp", u);
  else if (f == "log") outer = make_binary(NodeKind::kDiv, make_const(1.0), u);
  else if (f == "sqrt") outer = make_binary(NodeKind::kDiv, make_const(0.5), make_func("sqrt", u));
  else if (f == "abs") throw ExprError("abs is not differentiable; use it only for plotting data");
  else throw ExprError("unknown function: " + f);
  return make_binary(NodeKind::kMul, outer, du);
}

inline NodePtr diff_node(const NodePtr& n, int var) {
  switch (n->kind) {
    case NodeKind::kConst: return make_const(0.0);
    case NodeKind::kVar: return make_const(n->var == var ? 1.0 : 0.0);
    case NodeKind::kAdd: return make_binary(NodeKind::kAdd, diff_node(n->a, var), diff_node(n->b, var));
    case NodeKind::kSub: return make_binary(NodeKind::kSub, diff_node(n->a, var), diff_node(n->b, var));
    case NodeKind::kMul:
      return make_binary(NodeKind::kAdd,
                         make_binary(NodeKind::kMul, diff_node(n->a, var), n->b),
                         make_binary(NodeKind::kMul, n->a, diff_node(n->b, var)));
    case NodeKind::kDiv:
      return make_binary(
          NodeKind::kDiv,
          make_binary(NodeKind::kSub,
                      make_binary(NodeKind::kMul, diff_node(n->a, var), n->b),
                      make_binary(NodeKind::kMul, n->a, diff_node(n->b, var))),
          make_binary(NodeKind::kPow, n->b, make_const(2.0)));
    case NodeKind::kPow: {
      if (n->b->kind == NodeKind::kConst) {
        // d(u^c) = c u^(c-1) u'
        const double c = n->b->value;
        return make_binary(NodeKind::kMul, make_const(c),
                           make_binary(NodeKind::kMul,
                                       make_binary(NodeKind::kPow, n->a, make_const(c - 1.0)),
                                       diff_node(n->a, var)));
      }
      // d(u^v) = u^v (v' log u + v u'/u)
      NodePtr term = make_binary(
          NodeKind::kAdd,
          make_binary(NodeKind::kMul, diff_node(n->b, var), make_func("log", n->a)),
          make_binary(NodeKind::kDiv, make_binary(NodeKind::kMul, n->b, diff_node(n->a, var)), n->a));
      return make_binary(NodeKind::kMul, n, term);
    }
    case NodeKind::kNeg: return make_neg(diff_node(n->a, var));
    case NodeKind::kFunc: return diff_func(n, var);
  }
  throw ExprError("corrupt expression node");
}

class Parser {
 public:
  Parser(const std::string& src, int dim) : src_(src), dim_(dim) {}

  NodePtr parse() {
    NodePtr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size())
      throw ExprError("trailing characters at position " + std::to_string(pos_) + " in '" + src_ + "'");
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  NodePtr parse_expr() {
    NodePtr e = parse_term();
    for (;;) {
      if (eat('+')) e = make_binary(NodeKind::kAdd, e, parse_term());
      else if (eat('-')) e = make_binary(NodeKind::kSub, e, parse_term());
      else return e;
    }
  }
  NodePtr parse_term() {
    NodePtr e = parse_factor();
    for (;;) {
      if (eat('*')) e = make_binary(NodeKind::kMul, e, parse_factor());
      else if (eat('/')) e = make_binary(NodeKind::kDiv, e, parse_factor());
      else return e;
    }
  }
  NodePtr parse_factor() {
    if (eat('-')) return make_neg(parse_factor());
    if (eat('+')) return parse_factor();
    return parse_power();
  }
  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (eat('^')) return make_binary(NodeKind::kPow, base, parse_factor());
    return base;
  }
  NodePtr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) throw ExprError("unexpected end of expression in '" + src_ + "'");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* end = nullptr;
      const double v = std::strtod(src_.c_str() + pos_, &end);
      pos_ = static_cast<size_t>(end - src_.c_str());
      return make_const(v);
    }
    if (c == '(') {
      ++pos_;
      NodePtr e = parse_expr();
      if (!eat(')')) throw ExprError("missing ')' in '" + src_ + "'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      const std::string name = src_.substr(start, pos_ - start);
      if (name == "pi") return make_const(3.14159265358979323846);
      if (name == "e") return make_const(2.71828182845904523536);
      int var = coord_index(name);
      if (var >= 0) {
        if (var >= dim_)
          throw ExprError("coordinate '" + name + "' exceeds dimension " + std::to_string(dim_));
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::kVar;
        n->var = var;
        return n;
      }
      if (eat('(')) {
        NodePtr arg = parse_expr();
        if (!eat(')')) throw ExprError("missing ')' after " + name);
        return make_func(name, arg);
      }
      throw ExprError("unknown symbol '" + name + "'");
    }
    throw ExprError(std::string("unexpected character '") + c + "' in '" + src_ + "'");
  }

  static int coord_index(const std::string& name) {
    if (name == "x" || name == "x1") return 0;
    if (name == "y" || name == "x2") return 1;
    if (name == "z" || name == "x3") return 2;
    if (name == "w" || name == "x4") return 3;
    return -1;
  }

  const std::string& src_;
  int dim_;
  size_t pos_ = 0;
};

}  // namespace detail

// A parsed scalar expression of up to kMaxDim coordinates, with cached
// symbolic first and second derivative trees.
class Expr {
 public:
  Expr() = default;

  Expr(const std::string& source, int dim) : dim_(dim), source_(source) {
    root_ = detail::Parser(source, dim).parse();
    for (int i = 0; i < dim; ++i) {
      grad_[static_cast<size_t>(i)] = detail::diff_node(root_, i);
      for (int j = i; j < dim; ++j)
        hess_[static_cast<size_t>(i)][static_cast<size_t>(j)] =
            detail::diff_node(grad_[static_cast<size_t>(i)], j);
    }
  }

  int dim() const { return dim_; }
  const std::string& source() const { return source_; }
  bool valid() const { return root_ != nullptr; }

  double value(const Vec& x) const { return detail::eval_node(*root_, x); }

  Vec gradient(const Vec& x) const {
    Vec g(dim_);
    for (int i = 0; i < dim_; ++i) g[i] = detail::eval_node(*grad_[static_cast<size_t>(i)], x);
    return g;
  }

  Mat hessian(const Vec& x) const {
    Mat h(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = i; j < dim_; ++j) {
        const double v = detail::eval_node(*hess_[static_cast<size_t>(i)][static_cast<size_t>(j)], x);
        h(i, j) = v;
        h(j, i) = v;
      }
    return h;
  }

 private:
  int dim_ = 0;
  std::string source_;
  detail::NodePtr root_;
  std::array<detail::NodePtr, kMaxDim> grad_{};
  std::array<std::array<detail::NodePtr, kMaxDim>, kMaxDim> hess_{};
};

}  // namespace mingraph
