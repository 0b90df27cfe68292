#include "hypoheat/expr.h"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include "hypoheat/errors.h"

namespace hypoheat {

struct Expr::Node {
  Kind kind = Kind::kConstant;
  double value = 0.0;
  int index = 0;     // variable index or integer exponent
  UnaryFn fn = UnaryFn::kSin;
  Expr lhs_{std::shared_ptr<const Node>()};
  Expr rhs_{std::shared_ptr<const Node>()};
};

namespace {

const Expr& empty_expr() {
  static const Expr kEmpty = Expr::constant(0.0);
  return kEmpty;
}

}  // namespace

Expr::Expr() : Expr(constant(0.0)) {}

Expr Expr::constant(double value) {
  // Building the zero constant must not recurse through Expr().
  auto n = std::shared_ptr<Node>(new Node{Kind::kConstant, value, 0, UnaryFn::kSin,
                                          Expr(std::shared_ptr<const Node>()),
                                          Expr(std::shared_ptr<const Node>())});
  return Expr(std::move(n));
}

Expr Expr::variable(int index) {
  if (index != 1 && index != 2) {
    throw Error("variable index must be 1 or 2, got " + std::to_string(index));
  }
  auto n = std::make_shared<Node>();
  n->kind = Kind::kVariable;
  n->index = index;
  return Expr(std::move(n));
}

Expr Expr::binary(Kind kind, Expr lhs, Expr rhs) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs_ = std::move(lhs);
  n->rhs_ = std::move(rhs);
  return Expr(std::move(n));
}

Expr Expr::int_pow(Expr base, int exponent) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::kIntPow;
  n->index = exponent;
  n->lhs_ = std::move(base);
  return Expr(std::move(n));
}

Expr Expr::unary(UnaryFn fn, Expr child) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::kUnary;
  n->fn = fn;
  n->lhs_ = std::move(child);
  return Expr(std::move(n));
}

Expr::Kind Expr::kind() const { return node_->kind; }
double Expr::value() const { return node_->value; }
int Expr::index() const { return node_->index; }
int Expr::exponent() const { return node_->index; }
UnaryFn Expr::fn() const { return node_->fn; }
const Expr& Expr::lhs() const { return node_->lhs_.node_ ? node_->lhs_ : empty_expr(); }
const Expr& Expr::rhs() const { return node_->rhs_.node_ ? node_->rhs_ : empty_expr(); }

Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::kAdd, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::kSub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::kMul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::kDiv, a, b); }

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("operator or end of input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& expected) const {
    std::string found = pos_ < text_.size() ? "'" + std::string(1, text_[pos_]) + "'"
                                            : "end of input";
    throw ParseError(pos_, expected,
                     "syntax error at byte " + std::to_string(pos_) + ": expected " +
                         expected + ", found " + found);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool peek_number() {
    skip_ws();
    return pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.');
  }

  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      if (accept('+')) {
        e = e + parse_term();
      } else if (accept('-')) {
        e = e - parse_term();
      } else {
        return e;
      }
    }
  }

  Expr parse_term() {
    Expr e = parse_unary();
    for (;;) {
      if (accept('*')) {
        e = e * parse_unary();
      } else if (accept('/')) {
        e = e / parse_unary();
      } else {
        return e;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) {
      if (peek_number()) {
        double v = parse_number();
        if (peek('^')) return Expr::constant(-1.0) * parse_power_suffix(Expr::constant(v));
        return Expr::constant(-v);
      }
      return Expr::constant(-1.0) * parse_unary();
    }
    return parse_power();
  }

  Expr parse_power() { return parse_power_suffix(parse_primary()); }

  Expr parse_power_suffix(Expr base) {
    if (!accept('^')) return base;
    skip_ws();
    bool negative = false;
    if (accept('-')) {
      negative = true;
    } else {
      accept('+');
    }
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("integer exponent");
    int n = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, n);
    if (ec != std::errc()) {
      pos_ = start;
      fail("integer exponent in range");
    }
    (void)ptr;
    return Expr::int_pow(std::move(base), negative ? -n : n);
  }

  double parse_number() {
    skip_ws();
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      std::size_t exp_start = pos_;
      digits();
      if (exp_start == pos_) pos_ = mark;  // not an exponent after all
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail("numeric literal");
    }
    return v;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("operand");
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return Expr::constant(parse_number());
    }
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      if (!accept(')')) fail("')'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      std::string_view id = text_.substr(start, pos_ - start);
      if (id == "x1") return Expr::variable(1);
      if (id == "x2") return Expr::variable(2);
      UnaryFn fn;
      if (id == "sin") {
        fn = UnaryFn::kSin;
      } else if (id == "cos") {
        fn = UnaryFn::kCos;
      } else if (id == "exp") {
        fn = UnaryFn::kExp;
      } else if (id == "log") {
        fn = UnaryFn::kLog;
      } else {
        throw ParseError(start, "identifier x1, x2, sin, cos, exp or log",
                         "unknown identifier '" + std::string(id) + "' at byte " +
                             std::to_string(start));
      }
      if (!accept('(')) fail("'(' after function name");
      Expr arg = parse_expr();
      if (!accept(')')) fail("')'");
      return Expr::unary(fn, std::move(arg));
    }
    fail("operand");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text) { return Parser(text).parse_all(); }

// ---------------------------------------------------------------------------
// Printing

namespace {

constexpr int kPrecAdd = 1;
constexpr int kPrecMul = 2;
constexpr int kPrecAtom = 5;

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  std::string s(buf.data(), ptr);
  return s;
}

const char* fn_name(UnaryFn fn) {
  switch (fn) {
    case UnaryFn::kSin: return "sin";
    case UnaryFn::kCos: return "cos";
    case UnaryFn::kExp: return "exp";
    case UnaryFn::kLog: return "log";
  }
  return "?";
}

// Returns the printed text and its precedence level.
std::pair<std::string, int> print(const Expr& e) {
  auto wrap = [](const std::pair<std::string, int>& p, int min_prec) {
    return p.second >= min_prec ? p.first : "(" + p.first + ")";
  };
  switch (e.kind()) {
    case Expr::Kind::kConstant: {
      double v = e.value();
      if (std::signbit(v)) return {"(" + format_double(v) + ")", kPrecAtom};
      return {format_double(v), kPrecAtom};
    }
    case Expr::Kind::kVariable:
      return {e.index() == 1 ? "x1" : "x2", kPrecAtom};
    case Expr::Kind::kAdd:
    case Expr::Kind::kSub: {
      const char* op = e.kind() == Expr::Kind::kAdd ? " + " : " - ";
      return {wrap(print(e.lhs()), kPrecAdd) + op + wrap(print(e.rhs()), kPrecAdd + 1), kPrecAdd};
    }
    case Expr::Kind::kMul:
    case Expr::Kind::kDiv: {
      const char* op = e.kind() == Expr::Kind::kMul ? "*" : "/";
      return {wrap(print(e.lhs()), kPrecMul) + op + wrap(print(e.rhs()), kPrecMul + 1), kPrecMul};
    }
    case Expr::Kind::kIntPow:
      return {wrap(print(e.lhs()), kPrecAtom) + "^" + std::to_string(e.exponent()), kPrecAtom - 1};
    case Expr::Kind::kUnary:
      return {std::string(fn_name(e.fn())) + "(" + print(e.lhs()).first + ")", kPrecAtom};
  }
  return {"", kPrecAtom};
}

}  // namespace

std::string to_string(const Expr& e) { return print(e).first; }

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Expr::Kind::kConstant:
      // Bitwise comparison keeps -0.0 distinct from 0.0.
      return std::signbit(a.value()) == std::signbit(b.value()) &&
             (a.value() == b.value() || (std::isnan(a.value()) && std::isnan(b.value())));
    case Expr::Kind::kVariable:
      return a.index() == b.index();
    case Expr::Kind::kIntPow:
      return a.exponent() == b.exponent() && structurally_equal(a.lhs(), b.lhs());
    case Expr::Kind::kUnary:
      return a.fn() == b.fn() && structurally_equal(a.lhs(), b.lhs());
    default:
      return structurally_equal(a.lhs(), b.lhs()) && structurally_equal(a.rhs(), b.rhs());
  }
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double int_power(double base, int n) {
  bool invert = n < 0;
  unsigned long long m = invert ? -static_cast<long long>(n) : n;
  double result = 1.0;
  double b = base;
  while (m) {
    if (m & 1ULL) result *= b;
    b *= b;
    m >>= 1;
  }
  return invert ? 1.0 / result : result;
}

double apply_unary(UnaryFn fn, double v) {
  switch (fn) {
    case UnaryFn::kSin: return std::sin(v);
    case UnaryFn::kCos: return std::cos(v);
    case UnaryFn::kExp: return std::exp(v);
    case UnaryFn::kLog: return std::log(v);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double evaluate(const Expr& e, double x1, double x2) {
  switch (e.kind()) {
    case Expr::Kind::kConstant: return e.value();
    case Expr::Kind::kVariable: return e.index() == 1 ? x1 : x2;
    case Expr::Kind::kAdd: return evaluate(e.lhs(), x1, x2) + evaluate(e.rhs(), x1, x2);
    case Expr::Kind::kSub: return evaluate(e.lhs(), x1, x2) - evaluate(e.rhs(), x1, x2);
    case Expr::Kind::kMul: return evaluate(e.lhs(), x1, x2) * evaluate(e.rhs(), x1, x2);
    case Expr::Kind::kDiv: {
      double den = evaluate(e.rhs(), x1, x2);
      if (den == 0.0) throw DomainError("division by zero in " + to_string(e));
      return evaluate(e.lhs(), x1, x2) / den;
    }
    case Expr::Kind::kIntPow: {
      double base = evaluate(e.lhs(), x1, x2);
      if (base == 0.0 && e.exponent() < 0) {
        throw DomainError("zero raised to a negative power in " + to_string(e));
      }
      return int_power(base, e.exponent());
    }
    case Expr::Kind::kUnary: {
      double v = evaluate(e.lhs(), x1, x2);
      if (e.fn() == UnaryFn::kLog && !(v > 0.0)) {
        throw DomainError("log of non-positive value in " + to_string(e));
      }
      return apply_unary(e.fn(), v);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Simplification and differentiation

Expr make_add(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return a + b;
}

Expr make_sub(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
  if (b.is_constant(0.0)) return a;
  return a - b;
}

Expr make_mul(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  return a * b;
}

Expr make_div(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant() && b.value() != 0.0) {
    return Expr::constant(a.value() / b.value());
  }
  if (a.is_constant(0.0)) return Expr::constant(0.0);
  if (b.is_constant(1.0)) return a;
  return a / b;
}

Expr make_pow(const Expr& base, int exponent) {
  if (exponent == 0) return Expr::constant(1.0);
  if (exponent == 1) return base;
  if (base.is_constant() && !(base.value() == 0.0 && exponent < 0)) {
    return Expr::constant(int_power(base.value(), exponent));
  }
  return Expr::int_pow(base, exponent);
}

Expr make_unary(UnaryFn fn, const Expr& child) {
  if (child.is_constant() && !(fn == UnaryFn::kLog && !(child.value() > 0.0))) {
    return Expr::constant(apply_unary(fn, child.value()));
  }
  return Expr::unary(fn, child);
}

Expr simplify(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::kConstant:
    case Expr::Kind::kVariable:
      return e;
    case Expr::Kind::kAdd: return make_add(simplify(e.lhs()), simplify(e.rhs()));
    case Expr::Kind::kSub: return make_sub(simplify(e.lhs()), simplify(e.rhs()));
    case Expr::Kind::kMul: return make_mul(simplify(e.lhs()), simplify(e.rhs()));
    case Expr::Kind::kDiv: return make_div(simplify(e.lhs()), simplify(e.rhs()));
    case Expr::Kind::kIntPow: return make_pow(simplify(e.lhs()), e.exponent());
    case Expr::Kind::kUnary: return make_unary(e.fn(), simplify(e.lhs()));
  }
  return e;
}

Expr differentiate(const Expr& e, int var) {
  if (var != 1 && var != 2) throw Error("derivative index must be 1 or 2");
  switch (e.kind()) {
    case Expr::Kind::kConstant:
      return Expr::constant(0.0);
    case Expr::Kind::kVariable:
      return Expr::constant(e.index() == var ? 1.0 : 0.0);
    case Expr::Kind::kAdd:
      return make_add(differentiate(e.lhs(), var), differentiate(e.rhs(), var));
    case Expr::Kind::kSub:
      return make_sub(differentiate(e.lhs(), var), differentiate(e.rhs(), var));
    case Expr::Kind::kMul: {
      Expr a = simplify(e.lhs());
      Expr b = simplify(e.rhs());
      return make_add(make_mul(differentiate(a, var), b), make_mul(a, differentiate(b, var)));
    }
    case Expr::Kind::kDiv: {
      Expr a = simplify(e.lhs());
      Expr b = simplify(e.rhs());
      Expr num = make_sub(make_mul(differentiate(a, var), b), make_mul(a, differentiate(b, var)));
      return make_div(num, make_pow(b, 2));
    }
    case Expr::Kind::kIntPow: {
      Expr u = simplify(e.lhs());
      int n = e.exponent();
      return make_mul(make_mul(Expr::constant(n), make_pow(u, n - 1)), differentiate(u, var));
    }
    case Expr::Kind::kUnary: {
      Expr u = simplify(e.lhs());
      Expr du = differentiate(u, var);
      switch (e.fn()) {
        case UnaryFn::kSin: return make_mul(du, make_unary(UnaryFn::kCos, u));
        case UnaryFn::kCos:
          return make_mul(du, make_mul(Expr::constant(-1.0), make_unary(UnaryFn::kSin, u)));
        case UnaryFn::kExp: return make_mul(du, make_unary(UnaryFn::kExp, u));
        case UnaryFn::kLog: return make_div(du, u);
      }
    }
  }
  return Expr::constant(0.0);
}

// ---------------------------------------------------------------------------
// Compiled form

CompiledExpr::CompiledExpr(const Expr& e) {
  code_.clear();
  max_depth_ = 0;
  emit(simplify(e), 1);
}

void CompiledExpr::emit(const Expr& e, int depth) {
  max_depth_ = std::max(max_depth_, depth);
  switch (e.kind()) {
    case Expr::Kind::kConstant:
      code_.push_back({Op::kConst, 0, e.value()});
      return;
    case Expr::Kind::kVariable:
      code_.push_back({e.index() == 1 ? Op::kX1 : Op::kX2, 0, 0.0});
      return;
    case Expr::Kind::kAdd:
    case Expr::Kind::kSub:
    case Expr::Kind::kMul:
    case Expr::Kind::kDiv: {
      emit(e.lhs(), depth);
      emit(e.rhs(), depth + 1);
      Op op = e.kind() == Expr::Kind::kAdd   ? Op::kAdd
              : e.kind() == Expr::Kind::kSub ? Op::kSub
              : e.kind() == Expr::Kind::kMul ? Op::kMul
                                             : Op::kDiv;
      code_.push_back({op, 0, 0.0});
      return;
    }
    case Expr::Kind::kIntPow:
      emit(e.lhs(), depth);
      code_.push_back({Op::kPow, e.exponent(), 0.0});
      return;
    case Expr::Kind::kUnary: {
      emit(e.lhs(), depth);
      Op op = e.fn() == UnaryFn::kSin   ? Op::kSin
              : e.fn() == UnaryFn::kCos ? Op::kCos
              : e.fn() == UnaryFn::kExp ? Op::kExp
                                        : Op::kLog;
      code_.push_back({op, 0, 0.0});
      return;
    }
  }
}

double CompiledExpr::operator()(double x1, double x2) const {
  constexpr int kInlineStack = 32;
  double inline_stack[kInlineStack] = {};
  std::vector<double> heap_stack;
  double* stack = inline_stack;
  if (max_depth_ > kInlineStack) {
    heap_stack.resize(max_depth_);
    stack = heap_stack.data();
  }
  int top = -1;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::kConst: stack[++top] = in.value; break;
      case Op::kX1: stack[++top] = x1; break;
      case Op::kX2: stack[++top] = x2; break;
      case Op::kAdd: stack[top - 1] += stack[top]; --top; break;
      case Op::kSub: stack[top - 1] -= stack[top]; --top; break;
      case Op::kMul: stack[top - 1] *= stack[top]; --top; break;
      case Op::kDiv: stack[top - 1] /= stack[top]; --top; break;
      case Op::kPow: stack[top] = int_power(stack[top], in.exponent); break;
      case Op::kSin: stack[top] = std::sin(stack[top]); break;
      case Op::kCos: stack[top] = std::cos(stack[top]); break;
      case Op::kExp: stack[top] = std::exp(stack[top]); break;
      case Op::kLog:
        stack[top] = stack[top] > 0.0 ? std::log(stack[top])
                                      : std::numeric_limits<double>::quiet_NaN();
        break;
    }
  }
  return stack[0];
}

}  // namespace hypoheat
