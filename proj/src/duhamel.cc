#include "hypoheat/duhamel.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hypoheat/errors.h"
#include "hypoheat/gauss_algebra.h"
#include "hypoheat/parallel.h"

namespace hypoheat {

void MonomialOp::validate() const {
  if (a < 0 || b < 0 || a + b > 3) {
    throw Error("monomial exponents must be nonnegative with a + b <= 3");
  }
  if (deriv != 1 && deriv != 2) throw Error("derivative index must be 1 or 2");
}

std::string to_string(const MonomialOp& op) {
  std::ostringstream out;
  if (op.coeff != 1.0) out << op.coeff << "*";
  auto power = [&](const char* name, int n) {
    if (n == 0) return;
    out << name;
    if (n > 1) out << "^" << n;
    out << "*";
  };
  power("x1", op.a);
  power("x2", op.b);
  out << "d" << op.deriv;
  return out.str();
}

Vec2<double> grad_log_kernel(const LQOperator<double>& op, double t, const Vec2<double>& x,
                             const Vec2<double>& y) {
  if (!(t > 0.0)) throw SingularMatrixError("score requested at t <= 0");
  const Mat2<double> g = gramian_gamma(op, t);
  require_positive_definite<double>(g, "Gamma_t");
  return -g.inverse() * (x - mat_exp<double>(op.A(), -t) * y);
}

namespace {

using LD = long double;
using V = Vec2<LD>;
using M = Mat2<LD>;
using P2 = Polynomial<LD, 2>;
using P4 = Polynomial<LD, 4>;
using P6 = Polynomial<LD, 6>;

LD log_q0_unit(const LQOperator<LD>& op) {
  return gaussian_log_density<LD>(V::Zero(), gramian_G(op, LD(1)));
}

// N(z;0,C1) N(z;0,C2) = exp(log_const) N(z; 0, cov).
struct ZeroMeanProduct {
  LD log_const;
  M cov;
};

ZeroMeanProduct zero_mean_product(const M& C1, const M& C2) {
  return {gaussian_log_density<LD>(V::Zero(), M(C1 + C2)), harmonic_cov<LD>(C1, C2)};
}

// x_first^a x_{first+1}^b for the variables of an affine image.
template <typename Poly>
Poly monomial(const Poly& x1, const Poly& x2, int a, int b) {
  return x1.pow(a) * x2.pow(b);
}

template <typename Poly, typename Row>
Poly row_form(const Row& row, int first) {
  return Poly::linear(row.transpose().eval(), first);
}

void clamp_pair(LD& s, LD& r) {
  const LD c = kTimeClamp;
  s = std::clamp(s, c, LD(1) - LD(2) * c);
  r = std::clamp(r, c, LD(1) - s - c);
}

LD conv1_integrand_ld(const LQOperator<LD>& op, const MonomialOp& D, LD s, LD log_norm) {
  s = std::clamp(s, LD(kTimeClamp), LD(1) - LD(kTimeClamp));
  const LD tau = LD(1) - s;
  const M go_inv = gramian_gamma(op, tau).inverse();
  const ZeroMeanProduct zp = zero_mean_product(gramian_G(op, s), gramian_gamma(op, tau));
  const P2 z1 = P2::variable(0), z2 = P2::variable(1);
  const P2 poly = LD(D.coeff) * monomial(z1, z2, D.a, D.b) *
                  row_form<P2>(-go_inv.row(D.deriv - 1), 0);
  const LD e = poly.expect_pair(0, 1, zp.cov).evaluate({});
  return std::exp(zp.log_const - tau * op.A().trace() - log_norm) * e;
}

LD conv2_integrand_ld(const LQOperator<LD>& op, const MonomialOp& D1, const MonomialOp& D2, LD s,
                      LD r, LD log_norm) {
  clamp_pair(s, r);
  const LD tau = LD(1) - s;
  const LD rest = tau - r;
  const ChainSplit<LD> split = lemma31_split<LD>(op, s, r, V::Zero());
  const M& go_inv = split.gamma_outer_inv;
  const M e_mr = mat_exp<LD>(op.A(), -r);
  // Gamma_r^-1 e^{-rA} = e^{rA^T} G_r^-1.
  const M score_u = mat_exp<LD>(op.A(), r).transpose() * gramian_G(op, r).inverse();
  const M rest_inv = gramian_gamma(op, rest).inverse();
  const M score_z = e_mr.transpose() * go_inv;

  // Variables: z = (0,1), u = (2,3) with w = mean_map z + u.
  const P4 z1 = P4::variable(0), z2 = P4::variable(1);
  const P4 w1 = row_form<P4>(split.mean_map.row(0), 0) + P4::variable(2);
  const P4 w2 = row_form<P4>(split.mean_map.row(1), 0) + P4::variable(3);
  // Gamma_r^-1 (z - e^{-rA} w) = Gamma_{1-s}^-1 z - Gamma_r^-1 e^{-rA} u exactly.
  const int i = D1.deriv - 1, j = D2.deriv - 1;
  const P4 f1 = row_form<P4>(-go_inv.row(i), 0) + row_form<P4>(score_u.row(i), 2);
  // Gamma_rest^-1 w = e^{-rA^T} Gamma_{1-s}^-1 z + Gamma_rest^-1 u.
  const P4 f2 = row_form<P4>(-score_z.row(j), 0) - row_form<P4>(rest_inv.row(j), 2);
  const P4 poly = LD(D1.coeff * D2.coeff) * monomial(z1, z2, D1.a, D1.b) * f1 *
                  monomial(w1, w2, D2.a, D2.b) * f2;

  const ZeroMeanProduct zp = zero_mean_product(gramian_G(op, s), gramian_gamma(op, tau));
  const LD e = poly.expect_pair(2, 3, split.w_gaussian.cov()).expect_pair(0, 1, zp.cov).evaluate({});
  return std::exp(zp.log_const - tau * op.A().trace() - log_norm) * e;
}

using Kronrod = boost::math::quadrature::gauss_kronrod<double, 21>;
constexpr unsigned kMaxDepth = 18;

// Adaptive Gauss-Kronrod to an absolute tolerance. Boost terminates on
// error <= tol * L1, so the L1 norm is estimated from one panel first.
template <typename F>
double integrate_abs(F f, double abs_tol, double* error) {
  double l1 = 0.0;
  double value = Kronrod::integrate(f, 0.0, 1.0, 0, 0.0, error, &l1);
  if (*error <= abs_tol) return value;
  const double rel_tol = std::max(abs_tol / std::max(l1, 1e-300), 1e-15);
  return Kronrod::integrate(f, 0.0, 1.0, kMaxDepth, rel_tol, error);
}

}  // namespace

double conv1_integrand(const LQOperator<double>& op, const MonomialOp& D, double s) {
  D.validate();
  const auto opl = op.cast<LD>();
  return static_cast<double>(conv1_integrand_ld(opl, D, s, log_q0_unit(opl)));
}

double conv2_integrand(const LQOperator<double>& op, const MonomialOp& D1, const MonomialOp& D2,
                       double s, double r) {
  D1.validate();
  D2.validate();
  const auto opl = op.cast<LD>();
  return static_cast<double>(conv2_integrand_ld(opl, D1, D2, s, r, log_q0_unit(opl)));
}

ConvolutionResult conv1(const LQOperator<double>& op, const MonomialOp& D, double tol) {
  D.validate();
  const auto opl = op.cast<LD>();
  const LD log_norm = log_q0_unit(opl);
  auto f = [&](double s) { return static_cast<double>(conv1_integrand_ld(opl, D, s, log_norm)); };
  double error = 0.0;
  const double value = integrate_abs(f, tol, &error);
  if (!(error <= tol) || !std::isfinite(value)) {
    throw QuadratureError(error, "single convolution of " + to_string(D) +
                                     " did not reach tolerance; achieved " + std::to_string(error));
  }
  ConvolutionResult out;
  out.normalized = value;
  out.error = error;
  out.raw = value * std::exp(static_cast<double>(log_norm));
  return out;
}

ConvolutionResult conv2(const LQOperator<double>& op, const MonomialOp& D1, const MonomialOp& D2,
                        double tol) {
  D1.validate();
  D2.validate();
  const auto opl = op.cast<LD>();
  const LD log_norm = log_q0_unit(opl);
  const double inner_tol = tol / 10;
  double inner_error = 0.0;
  auto inner = [&](double s) {
    const double tau = 1.0 - s;
    auto g = [&](double v) {
      return tau * static_cast<double>(conv2_integrand_ld(opl, D1, D2, s, tau * v, log_norm));
    };
    double err = 0.0;
    const double value = integrate_abs(g, inner_tol, &err);
    inner_error = std::max(inner_error, err);
    return value;
  };
  double outer_error = 0.0;
  const double value = integrate_abs(inner, tol, &outer_error);
  const double error = outer_error + inner_error;
  if (!(error <= tol) || !std::isfinite(value)) {
    throw QuadratureError(error, "double convolution of (" + to_string(D1) + ", " +
                                     to_string(D2) + ") did not reach tolerance; achieved " +
                                     std::to_string(error));
  }
  ConvolutionResult out;
  out.normalized = value;
  out.error = error;
  out.raw = value * std::exp(static_cast<double>(log_norm));
  return out;
}

PerturbationSeries build_perturbation(const TaylorData& t) {
  if (t.S == 0.0) throw HypothesisError('b', "d1 alpha2 vanishes at the base point");
  const double kappa = t.d11_alpha2_0 / t.S;
  const double kappa3 = t.d111_alpha2_0 / t.S;
  PerturbationSeries p;
  p.x_terms = {{t.alpha1_0, 0, 0, 1}, {0.5 * t.d11_alpha2_0, 2, 0, 2}, {-0.5 * kappa, 0, 0, 1}};
  p.y_terms = {{t.d1_alpha1_0, 1, 0, 1},
               {t.d2_alpha2_0, 0, 1, 2},
               {t.d111_alpha2_0 / 6.0, 3, 0, 2},
               {-0.5 * (kappa3 - kappa * kappa), 1, 0, 1}};
  return p;
}

double second_order_coefficient(const TaylorData& t) {
  if (t.S == 0.0) throw HypothesisError('b', "d1 alpha2 vanishes at the base point");
  const double kappa = t.d11_alpha2_0 / t.S;
  const double kappa3 = t.d111_alpha2_0 / t.S;
  return -0.5 * t.alpha1_0 * t.alpha1_0 -
         0.5 * (t.d1_alpha1_0 + t.d2_alpha2_0 - t.alpha1_0 * kappa) -
         12.0 / 35.0 * kappa * kappa + 3.0 / 14.0 * kappa3;
}

ExpansionCoefficient expansion_coefficient(const TaylorData& t) {
  ExpansionCoefficient c;
  c.leading = std::sqrt(12.0) / (2 * std::numbers::pi * std::abs(t.S));
  c.first_order = second_order_coefficient(t);
  return c;
}

namespace {

// Sums coefficients of terms with the same shape; drops zero totals.
std::vector<MonomialOp> merge_terms(const std::vector<MonomialOp>& terms) {
  std::map<std::tuple<int, int, int>, double> merged;
  for (const auto& t : terms) {
    t.validate();
    merged[{t.a, t.b, t.deriv}] += t.coeff;
  }
  std::vector<MonomialOp> out;
  for (const auto& [key, c] : merged) {
    if (c != 0.0) out.push_back({c, std::get<0>(key), std::get<1>(key), std::get<2>(key)});
  }
  return out;
}

MonomialOp unit(const MonomialOp& m) { return {1.0, m.a, m.b, m.deriv}; }

}  // namespace

NumericCoefficient second_order_coefficient_numeric(const LQOperator<double>& op,
                                                    const PerturbationSeries& series,
                                                    double first_order_tol) {
  const std::vector<MonomialOp> xs = merge_terms(series.x_terms);
  const std::vector<MonomialOp> ys = merge_terms(series.y_terms);

  struct Job {
    double weight;
    MonomialOp d1;
    MonomialOp d2;
    bool pair;
    bool first_order;
  };
  std::vector<Job> jobs;
  for (const auto& x : xs) jobs.push_back({x.coeff, unit(x), {}, false, true});
  for (const auto& a : xs) {
    for (const auto& b : xs) jobs.push_back({a.coeff * b.coeff, unit(a), unit(b), true, false});
  }
  for (const auto& y : ys) jobs.push_back({y.coeff, unit(y), {}, false, false});

  std::vector<ConvolutionResult> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& job = jobs[k];
    results[k] = job.pair ? conv2(op, job.d1, job.d2) : conv1(op, job.d1);
  });

  NumericCoefficient out;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const double contrib = jobs[k].weight * results[k].normalized;
    const double err = std::abs(jobs[k].weight) * results[k].error;
    if (jobs[k].first_order) {
      out.first_order += contrib;
    } else {
      out.value += contrib;
      out.error += err;
    }
  }
  if (std::abs(out.first_order) > first_order_tol) {
    throw Error("order-eps convolution does not vanish: " + std::to_string(out.first_order));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remainder majorant

RemainderMajorant::RemainderMajorant(const LQOperator<double>& op, const MonomialOp& D1,
                                     const MonomialOp& D2, const MonomialOp& D3)
    : op_(op), D1_(D1), D2_(D2), D3_(D3) {
  D1.validate();
  D2.validate();
  D3.validate();
}

namespace {

// Linear form with absolute coefficients on the |x| variables.
template <typename Row>
P6 abs_form(const Row& row, int first) {
  return P6::linear(row.cwiseAbs().transpose().eval(), first);
}

}  // namespace

Polynomial<double, 2> RemainderMajorant::reduce(double s_in) const {
  using Rule = boost::math::quadrature::gauss<LD, 10>;
  const auto op = op_.cast<LD>();
  const LD s = std::clamp(LD(s_in), LD(0), LD(1) - LD(kTimeClamp));
  const LD tau = LD(1) - s;

  // Symmetric nodes and weights on [0, 1].
  std::vector<std::pair<LD, LD>> nodes;
  for (std::size_t k = 0; k < Rule::abscissa().size(); ++k) {
    const LD x = Rule::abscissa()[k], w = Rule::weights()[k] / LD(2);
    nodes.emplace_back((LD(1) - x) / LD(2), w);
    if (x != LD(0)) nodes.emplace_back((LD(1) + x) / LD(2), w);
  }

  P6 total;
  for (const auto& [a, wa] : nodes) {
    for (const auto& [b, wb] : nodes) {
      const LD r = tau * a;
      const LD l = tau * (LD(1) - a) * b;
      const LD rest = tau - r - l;
      const LD jac = tau * tau * (LD(1) - a) * wa * wb;
      // Outer split over w given z, inner split over t given w.
      const ChainSplit<LD> outer = lemma31_split<LD>(op, s, r, V::Zero());
      const ChainSplit<LD> inner = lemma31_split<LD>(op, s + r, l, V::Zero());
      const M score_u = mat_exp<LD>(op.A(), r).transpose() * gramian_G(op, r).inverse();
      const M score_v = mat_exp<LD>(op.A(), l).transpose() * gramian_G(op, l).inverse();
      const M score_tw = mat_exp<LD>(op.A(), -l).transpose() * inner.gamma_outer_inv;
      const M rest_inv = gramian_gamma(op, rest).inverse();

      // Variables: |z| = (0,1), |u| = (2,3), |v| = (4,5).
      const P6 z1 = P6::variable(0), z2 = P6::variable(1);
      const P6 w1 = abs_form(outer.mean_map.row(0), 0) + P6::variable(2);
      const P6 w2 = abs_form(outer.mean_map.row(1), 0) + P6::variable(3);
      const std::array<P6, 6> w_image = {w1, w2, P6(), P6(), P6::variable(4), P6::variable(5)};
      const P6 t1 = abs_form(inner.mean_map.row(0), 0).substitute(w_image) + P6::variable(4);
      const P6 t2 = abs_form(inner.mean_map.row(1), 0).substitute(w_image) + P6::variable(5);

      const int i = D1_.deriv - 1, j = D2_.deriv - 1, k = D3_.deriv - 1;
      const P6 f1 = abs_form(outer.gamma_outer_inv.row(i), 0) + abs_form(score_u.row(i), 2);
      const P6 f2 = abs_form(inner.gamma_outer_inv.row(j), 0).substitute(w_image) +
                    abs_form(score_v.row(j), 4);
      const P6 f3 = abs_form(score_tw.row(k), 0).substitute(w_image) + abs_form(rest_inv.row(k), 4);
      const LD c = std::abs(LD(D1_.coeff * D2_.coeff * D3_.coeff));
      const P6 poly = c * monomial(z1, z2, D1_.a, D1_.b) * f1 * monomial(w1, w2, D2_.a, D2_.b) *
                      f2 * monomial(t1, t2, D3_.a, D3_.b) * f3;
      const P6 reduced = poly.expect_pair_abs_bound(4, 5, inner.w_gaussian.cov())
                             .expect_pair_abs_bound(2, 3, outer.w_gaussian.cov());
      total += jac * reduced;
    }
  }
  Polynomial<double, 2> out;
  for (const auto& [e, coef] : total.terms()) {
    out += static_cast<double>(coef) * Polynomial<double, 2>::variable(0).pow(e[0]) *
           Polynomial<double, 2>::variable(1).pow(e[1]);
  }
  return out;
}

double RemainderMajorant::z_factor(double s, const Vec2<double>& z) const {
  const double tau = 1.0 - std::clamp(s, 0.0, 1.0 - kTimeClamp);
  return std::exp(gaussian_log_density<double>(z, gramian_gamma(op_, tau)) -
                  tau * op_.A().trace());
}

double RemainderMajorant::operator()(double s, const Vec2<double>& z) const {
  return reduce(s).evaluate({std::abs(z(0)), std::abs(z(1))}) * z_factor(s, z);
}

ProbeResult remainder_probe(const LQOperator<double>& op, const MonomialOp& D1,
                            const MonomialOp& D2, const MonomialOp& D3, const ProbeGrid& grid) {
  const RemainderMajorant majorant(op, D1, D2, D3);
  std::vector<double> row_max(grid.ns, 0.0);
  std::vector<char> row_finite(grid.ns, 1);
  parallel_for(grid.ns, [&](std::size_t k) {
    const double s = (k + 0.5) / grid.ns;
    const Polynomial<double, 2> P = majorant.reduce(s);
    const double tau = 1.0 - s;
    const Mat2<double> g = gramian_gamma(op, tau);
    const Mat2<double> g_inv = g.inverse();
    const double log_norm = -std::log(2 * std::numbers::pi * std::sqrt(g.determinant())) -
                            tau * op.A().trace();
    double best = 0.0;
    for (int i = 0; i < grid.nz; ++i) {
      const double z1 = grid.z1_extent * (2.0 * (i + 0.5) / grid.nz - 1.0);
      for (int j = 0; j < grid.nz; ++j) {
        const double z2 = grid.z2_extent * (2.0 * (j + 0.5) / grid.nz - 1.0);
        const Vec2<double> z(z1, z2);
        const double v =
            P.evaluate({std::abs(z1), std::abs(z2)}) * std::exp(log_norm - 0.5 * z.dot(g_inv * z));
        if (!std::isfinite(v)) row_finite[k] = 0;
        best = std::max(best, v);
      }
    }
    row_max[k] = best;
  });
  ProbeResult out;
  for (int k = 0; k < grid.ns; ++k) {
    const double s = (k + 0.5) / grid.ns;
    out.finite = out.finite && row_finite[k];
    out.max = std::max(out.max, row_max[k]);
    if (s >= 1.0 - grid.strip) {
      out.strip_max = std::max(out.strip_max, row_max[k]);
    } else {
      out.interior_max = std::max(out.interior_max, row_max[k]);
    }
  }
  return out;
}

}  // namespace hypoheat
