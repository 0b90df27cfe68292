#pragma once

// Closed-form expressions in the two chart variables x1, x2.
//
// Expressions are immutable trees with shared structure, so copies are cheap
// and values can be handed between threads freely. Grammar accepted by
// parse():
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' ['+' | '-'] integer)?
//   primary := number | 'x1' | 'x2' | fn '(' expr ')' | '(' expr ')'
//   fn      := 'sin' | 'cos' | 'exp' | 'log'
//
// A unary minus applied directly to a numeric literal produces a negative
// constant; otherwise -e is represented as (-1)*e.

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace hypoheat {

enum class UnaryFn { kSin, kCos, kExp, kLog };

class Expr {
 public:
  enum class Kind { kConstant, kVariable, kAdd, kSub, kMul, kDiv, kIntPow, kUnary };

  /// The constant 0.
  Expr();

  static Expr constant(double value);
  /// `index` must be 1 or 2.
  static Expr variable(int index);
  static Expr binary(Kind kind, Expr lhs, Expr rhs);
  static Expr int_pow(Expr base, int exponent);
  static Expr unary(UnaryFn fn, Expr child);

  Kind kind() const;
  double value() const;
  int index() const;
  int exponent() const;
  UnaryFn fn() const;
  /// Left operand, power base, or function argument.
  const Expr& lhs() const;
  const Expr& rhs() const;

  bool is_constant() const { return kind() == Kind::kConstant; }
  bool is_constant(double v) const { return is_constant() && value() == v; }

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

// Raw tree builders; no simplification is applied.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);

Expr parse(std::string_view text);

/// Printed form in the parser's grammar; parse(to_string(e)) rebuilds e.
std::string to_string(const Expr& e);

bool structurally_equal(const Expr& a, const Expr& b);

/// Throws DomainError naming the offending node.
double evaluate(const Expr& e, double x1, double x2);
inline double evaluate(const Expr& e, const Eigen::Vector2d& p) {
  return evaluate(e, p.x(), p.y());
}

/// Exact partial derivative with respect to x_var (var in {1, 2}), folded.
Expr differentiate(const Expr& e, int var);

/// Constant folding plus identity/annihilator elimination.
Expr simplify(const Expr& e);

// Smart constructors used by simplify() and differentiate().
Expr make_add(const Expr& a, const Expr& b);
Expr make_sub(const Expr& a, const Expr& b);
Expr make_mul(const Expr& a, const Expr& b);
Expr make_div(const Expr& a, const Expr& b);
Expr make_pow(const Expr& base, int exponent);
Expr make_unary(UnaryFn fn, const Expr& child);

/// Flat postfix program for hot loops. No domain checks: invalid points
/// yield inf or nan, which callers detect with std::isfinite.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const Expr& e);

  double operator()(double x1, double x2) const;
  double operator()(const Eigen::Vector2d& p) const { return (*this)(p.x(), p.y()); }

  bool is_constant() const { return code_.size() == 1 && code_[0].op == Op::kConst; }

 private:
  enum class Op : unsigned char {
    kConst, kX1, kX2, kAdd, kSub, kMul, kDiv, kPow, kSin, kCos, kExp, kLog
  };
  struct Instr {
    Op op;
    int exponent;
    double value;
  };
  void emit(const Expr& e, int depth);

  std::vector<Instr> code_{{Op::kConst, 0, 0.0}};
  int max_depth_ = 1;
};

}  // namespace hypoheat
