#include "hypoheat/geometry.h"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "hypoheat/errors.h"

namespace hypoheat {

namespace {

using V = Vec2<double>;

std::string point_string(const V& x) {
  return "(" + std::to_string(x(0)) + ", " + std::to_string(x(1)) + ")";
}

double det2(const V& a, const V& b) { return a(0) * b(1) - a(1) * b(0); }

Expr det_expr(const VectorField& a, const VectorField& b) {
  return make_sub(make_mul(a.f1, b.f2), make_mul(a.f2, b.f1));
}

// Coordinates (c1, c2) of W in the frame {A, B}, by Cramer's rule.
std::array<Expr, 2> frame_coords(const VectorField& A, const VectorField& B, const VectorField& W,
                                 const Expr& det) {
  return {make_div(det_expr(W, B), det), make_div(det_expr(A, W), det)};
}

}  // namespace

VectorField VectorField::parse(std::string_view f1, std::string_view f2) {
  return {hypoheat::parse(f1), hypoheat::parse(f2)};
}

V VectorField::at(const V& x) const { return V(evaluate(f1, x), evaluate(f2, x)); }

Expr VectorField::apply(const Expr& g) const {
  return make_add(make_mul(f1, differentiate(g, 1)), make_mul(f2, differentiate(g, 2)));
}

VectorField lie_bracket(const VectorField& X, const VectorField& Y) {
  return {make_sub(X.apply(Y.f1), Y.apply(X.f1)), make_sub(X.apply(Y.f2), Y.apply(X.f2))};
}

HypothesisCheck check_hypotheses(const VectorFieldPair& pair, const V& x0) {
  const V x0v = pair.X0.at(x0);
  const V x1v = pair.X1.at(x0);
  const V x2v = lie_bracket(pair.X0, pair.X1).at(x0);
  HypothesisCheck out;
  out.bracket_det = det2(x1v, x2v);
  out.parallel_det = det2(x0v, x1v);
  out.hormander = x1v.norm() > 0.0 &&
                  std::abs(out.bracket_det) > kFrameTol * x1v.norm() * x2v.norm();
  out.parallel = std::abs(out.parallel_det) <= kFrameTol * x0v.norm() * x1v.norm();
  return out;
}

void require_hypotheses(const VectorFieldPair& pair, const V& x0) {
  const HypothesisCheck h = check_hypotheses(pair, x0);
  if (!h.parallel) {
    throw HypothesisError('a', "X0 is not parallel to X1 at " + point_string(x0) +
                                   " (det = " + std::to_string(h.parallel_det) + ")");
  }
  if (!h.hormander) {
    throw HypothesisError('b', "X1 and [X0,X1] do not span the tangent plane at " +
                                   point_string(x0) +
                                   " (det = " + std::to_string(h.bracket_det) + ")");
  }
}

void StructureConstants::check_frame(const VectorFieldPair& pair, const V& x) const {
  const V a = pair.X1.at(x), b = X2.at(x);
  const double det = evaluate(frame_det, x);
  if (!(std::abs(det) > kFrameTol * a.norm() * b.norm())) {
    throw SingularMatrixError("frame {X1, [X0,X1]} degenerates at " + point_string(x));
  }
}

StructureConstants structure_constants(const VectorFieldPair& pair) {
  StructureConstants c;
  c.X2 = lie_bracket(pair.X0, pair.X1);
  c.frame_det = det_expr(pair.X1, c.X2);
  const auto c12 = frame_coords(pair.X1, c.X2, lie_bracket(pair.X1, c.X2), c.frame_det);
  const auto c02 = frame_coords(pair.X1, c.X2, lie_bracket(pair.X0, c.X2), c.frame_det);
  c.c12_1 = c12[0];
  c.c12_2 = c12[1];
  c.c02_1 = c02[0];
  c.c02_2 = c02[1];
  return c;
}

VolumeDensity canonical_volume(const VectorFieldPair& pair, const V& x0) {
  const StructureConstants c = structure_constants(pair);
  c.check_frame(pair, x0);
  const double sign = evaluate(c.frame_det, x0) > 0 ? 1.0 : -1.0;
  return {make_div(Expr::constant(sign), c.frame_det)};
}

Expr divergence(const VectorField& X, const VolumeDensity& mu) {
  const Expr flux = make_add(differentiate(make_mul(mu.rho, X.f1), 1),
                             differentiate(make_mul(mu.rho, X.f2), 2));
  return make_div(flux, mu.rho);
}

CurvatureInvariants curvature_invariants(const VectorFieldPair& pair, const V& x0) {
  require_hypotheses(pair, x0);
  const StructureConstants c = structure_constants(pair);
  c.check_frame(pair, x0);
  const double c2 = evaluate(c.c12_2, x0);
  const double x1c2 = evaluate(pair.X1.apply(c.c12_2), x0);
  return {-c2 * c2 + 3 * x1c2, 2 * c2};
}

R22Form r22_form(const VectorFieldPair& pair, const V& x0) {
  require_hypotheses(pair, x0);
  const StructureConstants c = structure_constants(pair);
  c.check_frame(pair, x0);
  auto at = [&](const Expr& e) { return evaluate(e, x0); };
  const double c12_1 = at(c.c12_1), c12_2 = at(c.c12_2);
  const double c02_1 = at(c.c02_1), c02_2 = at(c.c02_2);
  R22Form r;
  r.h1_sq = -c12_2 * c12_2 + 3 * at(pair.X1.apply(c.c12_2));
  r.h1 = -3 * c12_1 - 2 * c12_2 * c02_2 + 3 * at(pair.X0.apply(c.c12_2)) +
         3 * at(pair.X1.apply(c.c02_2));
  r.h2 = 2 * c12_2;
  r.constant = -2 * c02_1 - c02_2 * c02_2 + 3 * at(pair.X0.apply(c.c02_2));
  return r;
}

double r22(const VectorFieldPair& pair, const V& x0, double h1, double h2) {
  return r22_form(pair, x0)(h1, h2);
}

GeometricTerms geometric_terms(const VectorFieldPair& pair, const V& x0) {
  const CurvatureInvariants k = curvature_invariants(pair, x0);
  const V x0v = pair.X0.at(x0), x1v = pair.X1.at(x0);
  GeometricTerms g;
  g.beta = x0v.dot(x1v) / x1v.squaredNorm();
  const double residual = (x0v - g.beta * x1v).norm();
  if (residual > kFrameTol * std::max(1.0, x0v.norm())) {
    throw HypothesisError('a', "X0 - beta X1 residual " + std::to_string(residual) + " at " +
                                   point_string(x0));
  }
  g.div = evaluate(divergence(pair.X0, canonical_volume(pair, x0)), x0);
  g.K1 = k.K1;
  g.K2 = k.K2;
  g.coefficient = -0.5 * g.div - 0.5 * g.beta * g.beta + k.K1 / 14 - k.K2 * k.K2 / 70;
  return g;
}

double coefficient_geometric(const VectorFieldPair& pair, const V& x0) {
  return geometric_terms(pair, x0).coefficient;
}

void require_chart_form(const VectorFieldPair& pair) {
  const Expr a = simplify(pair.X1.f1), b = simplify(pair.X1.f2);
  if (!a.is_constant(1.0) || !b.is_constant(0.0)) {
    throw HypothesisError('c', "X1 is not d/dx1 in this chart: X1 = (" + to_string(a) + ", " +
                                   to_string(b) + ")");
  }
}

TaylorData chart_taylor_data(const VectorFieldPair& pair, const V& x0) {
  require_chart_form(pair);
  require_hypotheses(pair, x0);
  const Expr& a1 = pair.X0.f1;
  const Expr& a2 = pair.X0.f2;
  const Expr d1a2 = differentiate(a2, 1);
  const Expr d11a2 = differentiate(d1a2, 1);
  TaylorData t;
  t.alpha1_0 = evaluate(a1, x0);
  t.d1_alpha1_0 = evaluate(differentiate(a1, 1), x0);
  t.d2_alpha2_0 = evaluate(differentiate(a2, 2), x0);
  t.S = evaluate(d1a2, x0);
  t.d11_alpha2_0 = evaluate(d11a2, x0);
  t.d111_alpha2_0 = evaluate(differentiate(d11a2, 1), x0);
  return t;
}

double coefficient_coordinate(const VectorFieldPair& pair, const V& x0) {
  return second_order_coefficient(chart_taylor_data(pair, x0));
}

double full_asymptotics(const VectorFieldPair& pair, const V& x0, double t) {
  if (!(t > 0)) throw DomainError("asymptotics requested at t <= 0");
  const double lead = std::sqrt(12.0) / (2 * std::numbers::pi * t * t);
  return lead * (1 + t * coefficient_geometric(pair, x0));
}

double hamiltonian(const VectorFieldPair& pair, const CotangentState& s) {
  const double h1 = s.p.dot(pair.X1.at(s.x));
  return s.p.dot(pair.X0.at(s.x)) + 0.5 * h1 * h1;
}

namespace {

// Compiled components and Jacobians of X0, X1.
struct CompiledPair {
  std::array<CompiledExpr, 2> X0, X1;
  std::array<std::array<CompiledExpr, 2>, 2> dX0, dX1;  // d[i][k] = d_k X^i

  explicit CompiledPair(const VectorFieldPair& pair) {
    const std::array<Expr, 2> x0 = {pair.X0.f1, pair.X0.f2};
    const std::array<Expr, 2> x1 = {pair.X1.f1, pair.X1.f2};
    for (int i = 0; i < 2; ++i) {
      X0[i] = CompiledExpr(x0[i]);
      X1[i] = CompiledExpr(x1[i]);
      for (int k = 0; k < 2; ++k) {
        dX0[i][k] = CompiledExpr(differentiate(x0[i], k + 1));
        dX1[i][k] = CompiledExpr(differentiate(x1[i], k + 1));
      }
    }
  }

  // (x', p') at (x, p).
  std::pair<V, V> rhs(const V& x, const V& p) const {
    const V f0(X0[0](x), X0[1](x)), f1(X1[0](x), X1[1](x));
    const double h1 = p.dot(f1);
    V dp;
    for (int k = 0; k < 2; ++k) {
      const double a = p(0) * dX0[0][k](x) + p(1) * dX0[1][k](x);
      const double b = p(0) * dX1[0][k](x) + p(1) * dX1[1][k](x);
      dp(k) = -(a + h1 * b);
    }
    return {f0 + h1 * f1, dp};
  }
};

}  // namespace

std::vector<CotangentState> extremal_flow(const VectorFieldPair& pair,
                                          const CotangentState& initial, double T, int steps) {
  if (!(T > 0)) throw DomainError("extremal flow needs T > 0");
  if (steps < 1) throw DomainError("extremal flow needs at least one step");
  const CompiledPair f(pair);
  const double h = T / steps;
  std::vector<CotangentState> out;
  out.reserve(steps + 1);
  out.push_back(initial);
  V x = initial.x, p = initial.p;
  for (int n = 0; n < steps; ++n) {
    const auto [k1x, k1p] = f.rhs(x, p);
    const auto [k2x, k2p] = f.rhs(x + 0.5 * h * k1x, p + 0.5 * h * k1p);
    const auto [k3x, k3p] = f.rhs(x + 0.5 * h * k2x, p + 0.5 * h * k2p);
    const auto [k4x, k4p] = f.rhs(x + h * k3x, p + h * k3p);
    x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    p += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
    if (!x.allFinite() || !p.allFinite()) {
      throw SimulationError(n + 1, "extremal flow blew up at step " + std::to_string(n + 1));
    }
    out.push_back({x, p});
  }
  return out;
}

PoissonResiduals poisson_residuals(const VectorFieldPair& pair, const CotangentState& s) {
  const StructureConstants c = structure_constants(pair);
  c.check_frame(pair, s.x);
  const std::array<const VectorField*, 3> X = {&pair.X0, &pair.X1, &c.X2};
  // h_i = <p, X_i(x)>: d h_i / d p_k = X_i^k and d h_i / d x_k = <p, d_k X_i>.
  auto dh_dp = [&](int i) { return X[i]->at(s.x); };
  auto dh_dx = [&](int i) {
    V g;
    for (int k = 1; k <= 2; ++k) {
      g(k - 1) = s.p(0) * evaluate(differentiate(X[i]->f1, k), s.x) +
                 s.p(1) * evaluate(differentiate(X[i]->f2, k), s.x);
    }
    return g;
  };
  auto bracket = [&](int i, int j) { return dh_dp(i).dot(dh_dx(j)) - dh_dx(i).dot(dh_dp(j)); };
  auto h = [&](int i) { return s.p.dot(X[i]->at(s.x)); };
  auto at = [&](const Expr& e) { return evaluate(e, s.x); };
  PoissonResiduals r;
  r.r1 = bracket(0, 1) - h(2);
  r.r2 = bracket(1, 2) - at(c.c12_1) * h(1) - at(c.c12_2) * h(2);
  r.r3 = bracket(0, 2) - at(c.c02_1) * h(1) - at(c.c02_2) * h(2);
  return r;
}

}  // namespace hypoheat
