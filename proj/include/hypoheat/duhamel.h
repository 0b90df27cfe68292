#pragma once

// Duhamel perturbation engine around the Gaussian kernel q0 of an LQ
// operator. Space integrals are collapsed to Gaussian moments; only the time
// variables are integrated numerically.

#include <string>
#include <vector>

#include "hypoheat/gaussian.h"
#include "hypoheat/polynomial.h"

namespace hypoheat {

/// coeff * x1^a * x2^b * d/dx_deriv, acting on the first spatial argument.
struct MonomialOp {
  double coeff = 1.0;
  int a = 0;
  int b = 0;
  int deriv = 1;

  /// Throws unless a, b >= 0, a + b <= 3 and deriv is 1 or 2.
  void validate() const;
  bool same_shape(const MonomialOp& o) const {
    return a == o.a && b == o.b && deriv == o.deriv;
  }
};

std::string to_string(const MonomialOp& op);

/// Taylor data at the base point of a chart-form drift alpha1 d1 + alpha2 d2.
struct TaylorData {
  double alpha1_0 = 0.0;
  double d1_alpha1_0 = 0.0;
  double d2_alpha2_0 = 0.0;
  double S = 1.0;  // d1 alpha2
  double d11_alpha2_0 = 0.0;
  double d111_alpha2_0 = 0.0;
};

/// L_eps = L0 + eps X + eps^2 Y + ...
struct PerturbationSeries {
  std::vector<MonomialOp> x_terms;
  std::vector<MonomialOp> y_terms;
};

struct ExpansionCoefficient {
  double leading = 0.0;      // 1 / (2 pi sqrt(det G_1))
  double first_order = 0.0;  // coefficient of t inside the bracket
};

/// d/dx_i log q0(t,x,y) = -[Gamma_t^-1 (x - exp(-tA) y)]_i.
Vec2<double> grad_log_kernel(const LQOperator<double>& op, double t, const Vec2<double>& x,
                             const Vec2<double>& y);

struct ConvolutionResult {
  double raw = 0.0;
  double normalized = 0.0;  // raw / q0(1,0,0)
  double error = 0.0;       // estimated absolute error of `normalized`
};

/// Times closer than this to a degenerate Gramian are projected onto it.
inline constexpr double kTimeClamp = 1e-8;

/// (q0 * D q0)(1,0,0).
ConvolutionResult conv1(const LQOperator<double>& op, const MonomialOp& D, double tol = 1e-9);

/// (q0 * D1 q0 * D2 q0)(1,0,0) over the time simplex.
ConvolutionResult conv2(const LQOperator<double>& op, const MonomialOp& D1, const MonomialOp& D2,
                        double tol = 1e-8);

/// Integrand of conv1 at time s, normalized. Exposed for tests.
double conv1_integrand(const LQOperator<double>& op, const MonomialOp& D, double s);
/// Integrand of conv2 at (s, r), normalized. Exposed for tests.
double conv2_integrand(const LQOperator<double>& op, const MonomialOp& D1, const MonomialOp& D2,
                       double s, double r);

PerturbationSeries build_perturbation(const TaylorData& taylor);

/// Closed-form coefficient of t.
double second_order_coefficient(const TaylorData& taylor);

ExpansionCoefficient expansion_coefficient(const TaylorData& taylor);

struct NumericCoefficient {
  double value = 0.0;
  double error = 0.0;
  /// Normalized sum of the single convolutions of the order-eps operator.
  double first_order = 0.0;
};

/// Sum of double convolutions over pairs of order-eps terms plus single
/// convolutions of the order-eps^2 terms, normalized. Throws Error if the
/// order-eps contribution does not vanish within `first_order_tol`.
NumericCoefficient second_order_coefficient_numeric(const LQOperator<double>& op,
                                                    const PerturbationSeries& series,
                                                    double first_order_tol = 1e-7);

/// Majorant integrand P(|z|; s) exp(-z^T Gamma_{1-s}^-1 z / 2) / (2 pi sqrt(det Gamma_{1-s}))
/// of the triple convolution with the operators D1, D2, D3, where P collects the
/// absolute values of the chained reduction and the inner times are
/// integrated with a fixed tensor rule.
class RemainderMajorant {
 public:
  RemainderMajorant(const LQOperator<double>& op, const MonomialOp& D1, const MonomialOp& D2,
                    const MonomialOp& D3);

  /// P(.; s) as a polynomial in (|z1|, |z2|) with nonnegative coefficients.
  /// s is projected into [0, 1 - kTimeClamp].
  Polynomial<double, 2> reduce(double s) const;
  /// exp(-z^T Gamma_{1-s}^-1 z / 2) / (2 pi sqrt(det Gamma_{1-s})).
  double z_factor(double s, const Vec2<double>& z) const;
  /// Full integrand at (s, z).
  double operator()(double s, const Vec2<double>& z) const;

 private:
  LQOperator<double> op_;
  MonomialOp D1_, D2_, D3_;
};

struct ProbeGrid {
  int nz = 200;       // per z axis
  int ns = 50;        // s samples
  double z1_extent = 3.0;
  double z2_extent = 3.0;
  double strip = 0.1;  // s >= 1 - strip counts as the boundary strip
};

struct ProbeResult {
  double max = 0.0;
  double strip_max = 0.0;
  double interior_max = 0.0;
  bool finite = true;
};

/// Samples the majorant on a cell-centered grid over [0,1] x box; cell
/// centering keeps samples off the degenerate set {s = 1}.
ProbeResult remainder_probe(const LQOperator<double>& op, const MonomialOp& D1,
                            const MonomialOp& D2, const MonomialOp& D3,
                            const ProbeGrid& grid = {});

}  // namespace hypoheat
