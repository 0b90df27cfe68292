#include "hypoheat/geometry.h"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "hypoheat/errors.h"
#include "hypoheat/random_pairs.h"

namespace hypoheat {
namespace {

using V = Vec2<double>;

VectorFieldPair kolmogorov_pair() {
  return {VectorField::parse("0", "x1"), VectorField::parse("1", "0")};
}

VectorFieldPair quadratic_pair() {
  return {VectorField::parse("0", "x1 + 0.5*x1^2"), VectorField::parse("1", "0")};
}

GTEST_TEST(LieBracketTest, Examples) {
  const VectorFieldPair k = kolmogorov_pair();
  const VectorField b = lie_bracket(k.X0, k.X1);
  EXPECT_EQ(b.at(V(0.3, -2)), V(0, -1));

  const VectorField X = VectorField::parse("x2*sin(x1)", "x1^2");
  const VectorField z = lie_bracket(X, X);
  EXPECT_EQ(z.at(V(0.7, 0.2)), V(0, 0));

  const VectorField c = lie_bracket(VectorField::parse("1", "0"), VectorField::parse("x1", "0"));
  EXPECT_EQ(c.at(V(5, 5)), V(1, 0));
}

GTEST_TEST(LieBracketTest, Antisymmetric) {
  const VectorField X = VectorField::parse("x1*x2", "cos(x1)");
  const VectorField Y = VectorField::parse("exp(x2)", "x1^3 - x2");
  const V p(0.4, -0.3);
  EXPECT_LT((lie_bracket(X, Y).at(p) + lie_bracket(Y, X).at(p)).norm(), 1e-15);
}

GTEST_TEST(HypothesesTest, Examples) {
  const HypothesisCheck k = check_hypotheses(kolmogorov_pair(), V(0, 0));
  EXPECT_TRUE(k.hormander);
  EXPECT_TRUE(k.parallel);

  const VectorFieldPair flat{VectorField::parse("0", "1"), VectorField::parse("1", "0")};
  const HypothesisCheck f = check_hypotheses(flat, V(0, 0));
  EXPECT_FALSE(f.hormander);
  EXPECT_FALSE(f.parallel);

  const VectorFieldPair q{VectorField::parse("0", "x1 + x1^2"), VectorField::parse("1", "0")};
  const HypothesisCheck h = check_hypotheses(q, V(0, 0));
  EXPECT_TRUE(h.hormander);
  EXPECT_TRUE(h.parallel);
  EXPECT_EQ(h.bracket_det, -1.0);
}

GTEST_TEST(HypothesesTest, RequireNamesCondition) {
  const VectorFieldPair flat{VectorField::parse("0", "x2"), VectorField::parse("1", "0")};
  try {
    require_hypotheses(flat, V(0, 0));
    FAIL();
  } catch (const HypothesisError& e) {
    EXPECT_EQ(e.condition(), 'b');
  }
  try {
    require_hypotheses(kolmogorov_pair(), V(1, 0));
    FAIL();
  } catch (const HypothesisError& e) {
    EXPECT_EQ(e.condition(), 'a');
  }
}

GTEST_TEST(StructureConstantsTest, Kolmogorov) {
  const StructureConstants c = structure_constants(kolmogorov_pair());
  for (const Expr* e : {&c.c12_1, &c.c12_2, &c.c02_1, &c.c02_2}) {
    EXPECT_EQ(evaluate(*e, 0.3, -0.8), 0.0);
  }
}

GTEST_TEST(StructureConstantsTest, ChartFormRatio) {
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int n = 0; n < 20; ++n) {
    const VectorFieldPair pair = random_chart_pair(gen, 3);
    const StructureConstants c = structure_constants(pair);
    const Expr d1 = differentiate(pair.X0.f2, 1);
    const Expr d11 = differentiate(d1, 1);
    const V p(u(gen), u(gen));
    if (std::abs(evaluate(d1, p)) < 0.05) continue;
    const double expected = evaluate(d11, p) / evaluate(d1, p);
    EXPECT_NEAR(evaluate(c.c12_2, p), expected, 1e-12 * (1 + std::abs(expected)));
  }
  const StructureConstants q = structure_constants(quadratic_pair());
  EXPECT_DOUBLE_EQ(evaluate(q.c12_2, 0, 0), 1.0);
}

GTEST_TEST(StructureConstantsTest, DegenerateFrame) {
  const VectorFieldPair q = quadratic_pair();
  const StructureConstants c = structure_constants(q);
  EXPECT_THROW(c.check_frame(q, V(-1, 0)), SingularMatrixError);
  EXPECT_NO_THROW(c.check_frame(q, V(0, 0)));
}

GTEST_TEST(VolumeTest, Examples) {
  const VolumeDensity k = canonical_volume(kolmogorov_pair(), V(0, 0));
  EXPECT_EQ(evaluate(k.rho, 0.5, 0.5), 1.0);
  const VolumeDensity q = canonical_volume(quadratic_pair(), V(0, 0));
  for (double x1 : {-0.4, 0.0, 0.3}) EXPECT_NEAR(evaluate(q.rho, x1, 0), 1 / (1 + x1), 1e-15);
  const VectorFieldPair neg{VectorField::parse("0", "-2*x1"), VectorField::parse("1", "0")};
  EXPECT_NEAR(evaluate(canonical_volume(neg, V(0, 0)).rho, 0, 0), 0.5, 1e-15);
}

GTEST_TEST(VolumeTest, UnitOnFrame) {
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int n = 0; n < 5; ++n) {
    const VectorFieldPair pair = random_chart_pair(gen);
    const VolumeDensity mu = canonical_volume(pair, V(0, 0));
    const StructureConstants c = structure_constants(pair);
    for (int k = 0; k < 20; ++k) {
      const V p(u(gen), u(gen));
      EXPECT_NEAR(std::abs(evaluate(mu.rho, p) * evaluate(c.frame_det, p)), 1.0, 1e-12);
    }
  }
}

GTEST_TEST(DivergenceTest, Examples) {
  const VolumeDensity lebesgue{Expr::constant(1)};
  EXPECT_EQ(evaluate(simplify(divergence(VectorField::parse("1", "0"), lebesgue)), 0.2, 0.1), 0.0);
  EXPECT_EQ(evaluate(divergence(VectorField::parse("x1", "0"), lebesgue), 0.2, 0.1), 1.0);
  const VectorFieldPair q = quadratic_pair();
  EXPECT_EQ(evaluate(divergence(q.X0, canonical_volume(q, V(0, 0))), 0, 0), 0.0);
}

GTEST_TEST(DivergenceTest, IntegrationByParts) {
  // div_mu X = div X + X(log rho) for rho > 0.
  const VectorField X = VectorField::parse("x2^2 + sin(x1)", "x1*x2");
  const VolumeDensity mu{parse("exp(x1 - 0.5*x2) + 2")};
  const Expr lhs = divergence(X, mu);
  const Expr rhs = make_add(make_add(differentiate(X.f1, 1), differentiate(X.f2, 2)),
                            X.apply(make_unary(UnaryFn::kLog, mu.rho)));
  for (double a : {-0.5, 0.1, 0.9}) {
    EXPECT_NEAR(evaluate(lhs, a, 0.3), evaluate(rhs, a, 0.3), 1e-13);
  }
}

GTEST_TEST(CurvatureTest, Examples) {
  const CurvatureInvariants k = curvature_invariants(kolmogorov_pair(), V(0, 0));
  EXPECT_EQ(k.K1, 0.0);
  EXPECT_EQ(k.K2, 0.0);
  const CurvatureInvariants q = curvature_invariants(quadratic_pair(), V(0, 0));
  EXPECT_NEAR(q.K1, -4.0, 1e-14);
  EXPECT_NEAR(q.K2, 2.0, 1e-14);
}

GTEST_TEST(CurvatureTest, TranslatedChart) {
  const double a = 0.15;
  const VectorFieldPair shifted{VectorField::parse("0", "(x1 - 0.15) + 0.5*(x1 - 0.15)^2"),
                                VectorField::parse("1", "0")};
  const CurvatureInvariants k = curvature_invariants(shifted, V(a, 0.7));
  EXPECT_TRUE(std::isfinite(k.K1));
  EXPECT_NEAR(k.K1, -4.0, 1e-13);
  EXPECT_NEAR(k.K2, 2.0, 1e-13);
}

GTEST_TEST(R22Test, Kolmogorov) {
  for (double h1 : {-1.0, 0.5, 3.0}) {
    for (double h2 : {-2.0, 0.0, 1.5}) EXPECT_EQ(r22(kolmogorov_pair(), V(0, 0), h1, h2), 0.0);
  }
}

GTEST_TEST(R22Test, QuadraticExample) {
  const VectorFieldPair q = quadratic_pair();
  const StructureConstants c = structure_constants(q);
  const double c12_1 = evaluate(c.c12_1, 0, 0);
  EXPECT_NEAR(r22(q, V(0, 0), 1, 0), -4 - 3 * c12_1, 1e-13);
}

GTEST_TEST(R22Test, CoefficientExtraction) {
  std::mt19937 gen(3);
  for (int n = 0; n < 10; ++n) {
    const VectorFieldPair pair = random_chart_pair(gen);
    const V x0(0, 0);
    // Fit a h1^2 + b h1 + c h2 + d through four samples.
    const double h[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {2, 0}};
    Eigen::Matrix4d M;
    Eigen::Vector4d rhs;
    for (int k = 0; k < 4; ++k) {
      M.row(k) << h[k][0] * h[k][0], h[k][0], h[k][1], 1;
      rhs(k) = r22(pair, x0, h[k][0], h[k][1]);
    }
    const Eigen::Vector4d coef = M.partialPivLu().solve(rhs);
    const CurvatureInvariants k = curvature_invariants(pair, x0);
    EXPECT_NEAR(coef(0), k.K1, 1e-10 * (1 + std::abs(k.K1)));
    EXPECT_NEAR(coef(2), k.K2, 1e-10 * (1 + std::abs(k.K2)));
  }
}

GTEST_TEST(CoefficientTest, Examples) {
  EXPECT_EQ(coefficient_geometric(kolmogorov_pair(), V(0, 0)), 0.0);
  EXPECT_EQ(coefficient_coordinate(kolmogorov_pair(), V(0, 0)), 0.0);
  EXPECT_NEAR(coefficient_geometric(quadratic_pair(), V(0, 0)), -12.0 / 35, 1e-14);
  EXPECT_NEAR(coefficient_coordinate(quadratic_pair(), V(0, 0)), -12.0 / 35, 1e-14);
  const VectorFieldPair drift{VectorField::parse("0.6", "x1"), VectorField::parse("1", "0")};
  const GeometricTerms g = geometric_terms(drift, V(0, 0));
  EXPECT_EQ(g.beta, 0.6);
  EXPECT_EQ(g.div, 0.0);
  EXPECT_NEAR(g.coefficient, -0.18, 1e-15);
}

GTEST_TEST(CoefficientTest, GeometricEqualsCoordinate) {
  std::mt19937 gen(42);
  for (int n = 0; n < 100; ++n) {
    const VectorFieldPair pair = random_chart_pair(gen);
    const double g = coefficient_geometric(pair, V(0, 0));
    const double c = coefficient_coordinate(pair, V(0, 0));
    EXPECT_NEAR(g, c, 1e-10 * std::max(1.0, std::abs(c))) << to_string(pair.X0.f2);
  }
}

GTEST_TEST(CoefficientTest, ChartFormRequired) {
  const VectorFieldPair bent{VectorField::parse("0", "x1"), VectorField::parse("1", "x1")};
  try {
    coefficient_coordinate(bent, V(0, 0));
    FAIL();
  } catch (const HypothesisError& e) {
    EXPECT_EQ(e.condition(), 'c');
  }
}

GTEST_TEST(AsymptoticsTest, Kolmogorov) {
  const double lead = std::sqrt(12.0) / (2 * std::numbers::pi);
  EXPECT_NEAR(full_asymptotics(kolmogorov_pair(), V(0, 0), 1.0), lead, 1e-15);
  EXPECT_NEAR(full_asymptotics(kolmogorov_pair(), V(0, 0), 0.1), lead / 0.01, 1e-12);
  const VectorFieldPair q = quadratic_pair();
  EXPECT_NEAR(1e-8 * full_asymptotics(q, V(0, 0), 1e-4), lead, 1e-4 * lead);
}

VectorFieldPair nonlinear_pair() {
  return {VectorField::parse("0.3*sin(x2) + 0.2*x1^2", "x1 + 0.5*x1^2 - 0.2*x2"),
          VectorField::parse("1", "0.1*x2")};
}

double energy_drift(const VectorFieldPair& pair, const CotangentState& s0, double T, int steps) {
  const auto path = extremal_flow(pair, s0, T, steps);
  const double h0 = hamiltonian(pair, s0);
  double worst = 0;
  for (const auto& s : path) worst = std::max(worst, std::abs(hamiltonian(pair, s) - h0));
  return worst / std::abs(h0);
}

GTEST_TEST(ExtremalTest, EnergyConservation) {
  const CotangentState s0{V(0.1, -0.2), V(1.0, 0.5)};
  EXPECT_LT(energy_drift(nonlinear_pair(), s0, 1.0, 1000), 1e-8);
  EXPECT_LT(energy_drift(quadratic_pair(), s0, 1.0, 1000), 1e-8);
}

GTEST_TEST(ExtremalTest, FourthOrder) {
  const CotangentState s0{V(0.1, -0.2), V(1.0, 0.5)};
  const double coarse = energy_drift(nonlinear_pair(), s0, 1.0, 20);
  const double fine = energy_drift(nonlinear_pair(), s0, 1.0, 40);
  EXPECT_GT(coarse / fine, 8);
  EXPECT_LT(coarse / fine, 32);
}

GTEST_TEST(ExtremalTest, ProjectionFollowsControl) {
  const VectorFieldPair k = kolmogorov_pair();
  const int steps = 1000;
  const double h = 1.0 / steps;
  const auto path = extremal_flow(k, {V(0, 0), V(1, 0)}, 1.0, steps);
  ASSERT_EQ(path.size(), steps + 1u);
  for (int n = 1; n < steps; ++n) {
    const V xdot = (path[n + 1].x - path[n - 1].x) / (2 * h);
    const double h1 = path[n].p.dot(k.X1.at(path[n].x));
    const V model = k.X0.at(path[n].x) + h1 * k.X1.at(path[n].x);
    EXPECT_LT((xdot - model).norm(), 1e-6);
  }
}

GTEST_TEST(ExtremalTest, ZeroCovector) {
  const auto path = extremal_flow(kolmogorov_pair(), {V(1, 0), V(0, 0)}, 2.0, 100);
  for (std::size_t n = 0; n < path.size(); ++n) {
    EXPECT_EQ(path[n].p, V(0, 0));
    EXPECT_NEAR(path[n].x(0), 1.0, 1e-15);
    EXPECT_NEAR(path[n].x(1), 2.0 * n / 100, 1e-13);
  }
}

GTEST_TEST(ExtremalTest, BlowUpReportsStep) {
  const VectorFieldPair wild{VectorField::parse("x1^3", "x1"), VectorField::parse("1", "0")};
  try {
    extremal_flow(wild, {V(10, 0), V(0, 0)}, 1.0, 10);
    FAIL();
  } catch (const SimulationError& e) {
    EXPECT_GE(e.index(), 1u);
    EXPECT_LE(e.index(), 10u);
  }
  EXPECT_THROW(extremal_flow(wild, {}, 0.0, 10), DomainError);
}

GTEST_TEST(PoissonTest, Kolmogorov) {
  std::mt19937 gen(9);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int n = 0; n < 50; ++n) {
    const PoissonResiduals r =
        poisson_residuals(kolmogorov_pair(), {V(u(gen), u(gen)), V(u(gen), u(gen))});
    EXPECT_LT(std::abs(r.r1) + std::abs(r.r2) + std::abs(r.r3), 1e-12);
  }
}

GTEST_TEST(PoissonTest, NonlinearPairs) {
  std::mt19937 gen(10);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (const VectorFieldPair& pair : {quadratic_pair(), nonlinear_pair()}) {
    for (int n = 0; n < 50; ++n) {
      const PoissonResiduals r = poisson_residuals(pair, {V(u(gen), u(gen)), V(u(gen), u(gen))});
      EXPECT_LT(std::abs(r.r1), 1e-10);
      EXPECT_LT(std::abs(r.r2), 1e-10);
      EXPECT_LT(std::abs(r.r3), 1e-10);
    }
  }
}

}  // namespace
}  // namespace hypoheat
