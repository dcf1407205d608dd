#include "delayctl/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "delayctl/errors.hpp"

namespace delayctl {

enum class Op { kConst, kVar, kNeg, kAdd, kSub, kMul, kDiv, kPow, kIntPow, kCall };
enum class Fn { kAbs, kExp, kLog, kSqrt, kSin, kCos, kTanh, kMin, kMax, kClamp };

struct Expression::Node {
  Op op = Op::kConst;
  double value = 0.0;
  int index = 0;  // variable index, integer exponent
  Fn fn = Fn::kAbs;
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

const std::map<std::string, std::pair<Fn, int>>& functions() {
  static const std::map<std::string, std::pair<Fn, int>> table = {
      {"abs", {Fn::kAbs, 1}},   {"exp", {Fn::kExp, 1}},   {"log", {Fn::kLog, 1}},
      {"sqrt", {Fn::kSqrt, 1}}, {"sin", {Fn::kSin, 1}},   {"cos", {Fn::kCos, 1}},
      {"tanh", {Fn::kTanh, 1}}, {"min", {Fn::kMin, 2}},   {"max", {Fn::kMax, 2}},
      {"clamp", {Fn::kClamp, 3}},
  };
  return table;
}

class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& vars) : s_(src), vars_(vars) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError("expression", msg + " at offset " + std::to_string(pos_) + " in \"" + s_ + "\"");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr make(Op op, std::vector<NodePtr> args) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->args = std::move(args);
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    while (true) {
      if (accept('+')) lhs = make(Op::kAdd, {lhs, term()});
      else if (accept('-')) lhs = make(Op::kSub, {lhs, term()});
      else return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (true) {
      if (accept('*')) lhs = make(Op::kMul, {lhs, unary()});
      else if (accept('/')) lhs = make(Op::kDiv, {lhs, unary()});
      else return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::kNeg, {unary()});
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = atom();
    if (!accept('^')) return base;
    NodePtr ex = unary();
    if (ex->op == Op::kConst && ex->value == std::round(ex->value) && std::abs(ex->value) <= 64) {
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::kIntPow;
      n->index = static_cast<int>(ex->value);
      n->args = {base};
      return n;
    }
    return make(Op::kPow, {base, ex});
  }

  NodePtr atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      auto n = std::make_shared<Expression::Node>();
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (accept('(')) {
        auto it = functions().find(name);
        if (it == functions().end()) fail("unknown function '" + name + "'");
        std::vector<NodePtr> args{expr()};
        while (accept(',')) args.push_back(expr());
        if (!accept(')')) fail("expected ')'");
        if (static_cast<int>(args.size()) != it->second.second) {
          fail(name + " takes " + std::to_string(it->second.second) + " arguments");
        }
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::kCall;
        n->fn = it->second.first;
        n->args = std::move(args);
        return n;
      }
      if (name == "pi") {
        auto n = std::make_shared<Expression::Node>();
        n->value = M_PI;
        return n;
      }
      auto it = std::find(vars_.begin(), vars_.end(), name);
      if (it == vars_.end()) fail("unknown name '" + name + "'");
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::kVar;
      n->index = static_cast<int>(it - vars_.begin());
      return n;
    }
    if (accept('(')) {
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;
};

double eval(const Expression::Node& n, const VectorXd& x) {
  switch (n.op) {
    case Op::kConst: return n.value;
    case Op::kVar: return x(n.index);
    case Op::kNeg: return -eval(*n.args[0], x);
    case Op::kAdd: return eval(*n.args[0], x) + eval(*n.args[1], x);
    case Op::kSub: return eval(*n.args[0], x) - eval(*n.args[1], x);
    case Op::kMul: return eval(*n.args[0], x) * eval(*n.args[1], x);
    case Op::kDiv: return eval(*n.args[0], x) / eval(*n.args[1], x);
    case Op::kPow: return std::pow(eval(*n.args[0], x), eval(*n.args[1], x));
    case Op::kIntPow: {
      const double b = eval(*n.args[0], x);
      double r = 1.0;
      for (int i = 0; i < std::abs(n.index); ++i) r *= b;
      return n.index < 0 ? 1.0 / r : r;
    }
    case Op::kCall: {
      const double a = eval(*n.args[0], x);
      switch (n.fn) {
        case Fn::kAbs: return std::abs(a);
        case Fn::kExp: return std::exp(a);
        case Fn::kLog: return std::log(a);
        case Fn::kSqrt: return std::sqrt(a);
        case Fn::kSin: return std::sin(a);
        case Fn::kCos: return std::cos(a);
        case Fn::kTanh: return std::tanh(a);
        case Fn::kMin: return std::min(a, eval(*n.args[1], x));
        case Fn::kMax: return std::max(a, eval(*n.args[1], x));
        case Fn::kClamp: return std::clamp(a, eval(*n.args[1], x), eval(*n.args[2], x));
      }
    }
  }
  return 0.0;
}

struct Dual {
  double v;
  VectorXd g;
};

Dual eval_dual(const Expression::Node& n, const VectorXd& x) {
  const int dim = static_cast<int>(x.size());
  switch (n.op) {
    case Op::kConst: return {n.value, VectorXd::Zero(dim)};
    case Op::kVar: {
      Dual d{x(n.index), VectorXd::Zero(dim)};
      d.g(n.index) = 1.0;
      return d;
    }
    case Op::kNeg: {
      Dual a = eval_dual(*n.args[0], x);
      return {-a.v, -a.g};
    }
    case Op::kAdd: {
      Dual a = eval_dual(*n.args[0], x), b = eval_dual(*n.args[1], x);
      return {a.v + b.v, a.g + b.g};
    }
    case Op::kSub: {
      Dual a = eval_dual(*n.args[0], x), b = eval_dual(*n.args[1], x);
      return {a.v - b.v, a.g - b.g};
    }
    case Op::kMul: {
      Dual a = eval_dual(*n.args[0], x), b = eval_dual(*n.args[1], x);
      return {a.v * b.v, a.g * b.v + b.g * a.v};
    }
    case Op::kDiv: {
      Dual a = eval_dual(*n.args[0], x), b = eval_dual(*n.args[1], x);
      return {a.v / b.v, (a.g * b.v - b.g * a.v) / (b.v * b.v)};
    }
    case Op::kPow: {
      Dual a = eval_dual(*n.args[0], x), b = eval_dual(*n.args[1], x);
      const double v = std::pow(a.v, b.v);
      VectorXd g = a.g * (b.v * std::pow(a.v, b.v - 1.0));
      if (a.v > 0.0) g += b.g * (v * std::log(a.v));
      return {v, g};
    }
    case Op::kIntPow: {
      Dual a = eval_dual(*n.args[0], x);
      const int k = n.index;
      if (k == 0) return {1.0, VectorXd::Zero(dim)};
      double pkm1 = 1.0;  // a^{|k|-1}
      for (int i = 0; i < std::abs(k) - 1; ++i) pkm1 *= a.v;
      const double pk = pkm1 * a.v;
      if (k > 0) return {pk, a.g * (k * pkm1)};
      return {1.0 / pk, a.g * (k / (pk * a.v))};
    }
    case Op::kCall: {
      Dual a = eval_dual(*n.args[0], x);
      switch (n.fn) {
        case Fn::kAbs: return {std::abs(a.v), a.g * (a.v < 0.0 ? -1.0 : (a.v > 0.0 ? 1.0 : 0.0))};
        case Fn::kExp: {
          const double e = std::exp(a.v);
          return {e, a.g * e};
        }
        case Fn::kLog: return {std::log(a.v), a.g / a.v};
        case Fn::kSqrt: {
          const double r = std::sqrt(a.v);
          return {r, a.g / (2.0 * r)};
        }
        case Fn::kSin: return {std::sin(a.v), a.g * std::cos(a.v)};
        case Fn::kCos: return {std::cos(a.v), a.g * -std::sin(a.v)};
        case Fn::kTanh: {
          const double th = std::tanh(a.v);
          return {th, a.g * (1.0 - th * th)};
        }
        case Fn::kMin: {
          Dual b = eval_dual(*n.args[1], x);
          return a.v <= b.v ? a : b;
        }
        case Fn::kMax: {
          Dual b = eval_dual(*n.args[1], x);
          return a.v >= b.v ? a : b;
        }
        case Fn::kClamp: {
          Dual lo = eval_dual(*n.args[1], x), hi = eval_dual(*n.args[2], x);
          if (a.v < lo.v) return lo;
          if (a.v > hi.v) return hi;
          return a;
        }
      }
    }
  }
  return {0.0, VectorXd::Zero(dim)};
}

bool mentions(const Expression::Node& n, int i) {
  if (n.op == Op::kVar) return n.index == i;
  return std::any_of(n.args.begin(), n.args.end(), [i](const NodePtr& a) { return mentions(*a, i); });
}

}  // namespace

Expression::Expression(const std::string& source, std::vector<std::string> variables)
    : source_(source), variables_(std::move(variables)) {
  root_ = Parser(source_, variables_).parse();
}

double Expression::operator()(const VectorXd& vars) const {
  if (!root_) return 0.0;
  return eval(*root_, vars);
}

double Expression::eval_grad(const VectorXd& vars, VectorXd& grad) const {
  if (!root_) {
    grad = VectorXd::Zero(vars.size());
    return 0.0;
  }
  Dual d = eval_dual(*root_, vars);
  grad = std::move(d.g);
  return d.v;
}

bool Expression::depends_on(int i) const { return root_ && mentions(*root_, i); }

std::vector<std::string> indexed_names(const std::string& prefix, int n) {
  if (n == 1) return {prefix};
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace delayctl
