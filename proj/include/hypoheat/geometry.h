#pragma once

// Invariants of the affine control system x' = X0(x) + u X1(x) on a plane
// chart: brackets, structure constants of the frame {X1, X2 = [X0,X1]},
// canonical volume, K1/K2, R22, extremals, and the two forms of the
// first-order heat-kernel coefficient.

#include <string_view>
#include <vector>

#include "hypoheat/duhamel.h"
#include "hypoheat/expr.h"
#include "hypoheat/gaussian.h"

namespace hypoheat {

struct VectorField {
  Expr f1;
  Expr f2;

  static VectorField parse(std::string_view f1, std::string_view f2);

  Vec2<double> at(const Vec2<double>& x) const;
  /// The derivation X(g) = f1 d1 g + f2 d2 g.
  Expr apply(const Expr& g) const;
};

/// Drift X0 and controlled field X1.
struct VectorFieldPair {
  VectorField X0;
  VectorField X1;
};

/// [X,Y]^k = X(Y^k) - Y(X^k).
VectorField lie_bracket(const VectorField& X, const VectorField& Y);

/// Relative tolerance for the determinant tests of the frame hypotheses.
inline constexpr double kFrameTol = 1e-10;

struct HypothesisCheck {
  bool hormander = false;  // det[X1 | [X0,X1]] != 0
  bool parallel = false;   // X0 ^ X1 = 0
  double bracket_det = 0.0;
  double parallel_det = 0.0;
};

HypothesisCheck check_hypotheses(const VectorFieldPair& pair, const Vec2<double>& x0);

/// Throws HypothesisError with condition 'a' or 'b'.
void require_hypotheses(const VectorFieldPair& pair, const Vec2<double>& x0);

/// [X1,X2] = c12_1 X1 + c12_2 X2 and [X0,X2] = c02_1 X1 + c02_2 X2.
struct StructureConstants {
  VectorField X2;
  Expr frame_det;  // det[X1 | X2]
  Expr c12_1;
  Expr c12_2;
  Expr c02_1;
  Expr c02_2;

  /// Throws SingularMatrixError where the frame degenerates.
  void check_frame(const VectorFieldPair& pair, const Vec2<double>& x) const;
};

StructureConstants structure_constants(const VectorFieldPair& pair);

/// mu = rho dx1 ^ dx2.
struct VolumeDensity {
  Expr rho;
};

/// rho = +-1 / det[X1 | X2], the sign making rho positive at x0.
VolumeDensity canonical_volume(const VectorFieldPair& pair, const Vec2<double>& x0);

/// (d1(rho X^1) + d2(rho X^2)) / rho.
Expr divergence(const VectorField& X, const VolumeDensity& mu);

struct CurvatureInvariants {
  double K1 = 0.0;
  double K2 = 0.0;
};

CurvatureInvariants curvature_invariants(const VectorFieldPair& pair, const Vec2<double>& x0);

/// R22 = h1^2 K1 + h1 c_h1 + h2 K2 + c_0 at a point.
struct R22Form {
  double h1_sq = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  double constant = 0.0;

  double operator()(double a, double b) const { return h1_sq * a * a + h1 * a + h2 * b + constant; }
};

R22Form r22_form(const VectorFieldPair& pair, const Vec2<double>& x0);
double r22(const VectorFieldPair& pair, const Vec2<double>& x0, double h1, double h2);

struct GeometricTerms {
  double div = 0.0;   // div_mu(X0)(x0)
  double beta = 0.0;  // X0(x0) = beta X1(x0)
  double K1 = 0.0;
  double K2 = 0.0;
  double coefficient = 0.0;
};

/// -div/2 - beta^2/2 + K1/14 - K2^2/70 with its ingredients.
GeometricTerms geometric_terms(const VectorFieldPair& pair, const Vec2<double>& x0);
double coefficient_geometric(const VectorFieldPair& pair, const Vec2<double>& x0);

/// Throws HypothesisError('c') unless X1 simplifies to d1 exactly.
void require_chart_form(const VectorFieldPair& pair);

/// Taylor data of X0 = alpha1 d1 + alpha2 d2 at x0.
TaylorData chart_taylor_data(const VectorFieldPair& pair, const Vec2<double>& x0);
double coefficient_coordinate(const VectorFieldPair& pair, const Vec2<double>& x0);

/// sqrt(12) / (2 pi t^2) (1 + t c), the mu-density prediction at (x0, x0).
double full_asymptotics(const VectorFieldPair& pair, const Vec2<double>& x0, double t);

struct CotangentState {
  Vec2<double> x = Vec2<double>::Zero();
  Vec2<double> p = Vec2<double>::Zero();
};

/// H = <p, X0(x)> + <p, X1(x)>^2 / 2.
double hamiltonian(const VectorFieldPair& pair, const CotangentState& state);

/// Fixed-step RK4 for the Hamiltonian system of H. Returns steps + 1 states
/// including the initial one. Throws SimulationError on a non-finite state.
std::vector<CotangentState> extremal_flow(const VectorFieldPair& pair,
                                          const CotangentState& initial, double T, int steps);

struct PoissonResiduals {
  double r1 = 0.0;  // {h0,h1} - h2
  double r2 = 0.0;  // {h1,h2} - c12_1 h1 - c12_2 h2
  double r3 = 0.0;  // {h0,h2} - c02_1 h1 - c02_2 h2
};

PoissonResiduals poisson_residuals(const VectorFieldPair& pair, const CotangentState& state);

}  // namespace hypoheat
