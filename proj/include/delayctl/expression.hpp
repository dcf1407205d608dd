#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace delayctl {

using Eigen::VectorXd;

/// Small arithmetic language for costs and histories in spec files.
///
///   expr   := term (('+' | '-') term)*
///   term   := unary (('*' | '/') unary)*
///   unary  := '-' unary | power
///   power  := atom ('^' unary)?
///   atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Names are bound by the caller (e.g. y1..yn, y for n = 1, t, u1..um).
/// Functions: abs exp log sqrt sin cos tanh min max clamp(x, lo, hi).
/// Gradients are computed by forward-mode dual numbers.
class Expression {
 public:
  Expression() = default;
  /// Throws ValidationError on syntax errors or unknown names.
  Expression(const std::string& source, std::vector<std::string> variables);

  double operator()(const VectorXd& vars) const;
  /// Value and gradient with respect to all variables.
  double eval_grad(const VectorXd& vars, VectorXd& grad) const;

  const std::string& source() const { return source_; }
  const std::vector<std::string>& variables() const { return variables_; }
  bool empty() const { return !root_; }
  /// True when the expression mentions variable `i`.
  bool depends_on(int i) const;

  struct Node;

 private:
  std::string source_;
  std::vector<std::string> variables_;
  std::shared_ptr<const Node> root_;
};

/// y1..yn (or just y when n = 1); `prefix` replaces "y".
std::vector<std::string> indexed_names(const std::string& prefix, int n);

}  // namespace delayctl
