#pragma once

// Closed Gaussian calculus on the plane: products of densities, the chained
// factorization used to collapse Duhamel space integrals, and moments up to
// order six.

#include <array>
#include <cmath>
#include <boost/math/constants/constants.hpp>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "hypoheat/errors.h"
#include "hypoheat/gaussian.h"

namespace hypoheat {

inline constexpr int kMaxMomentOrder = 6;

template <typename T>
class Gaussian {
 public:
  /// Symmetrizes `cov`; throws if the asymmetry exceeds 1e-12 relative or
  /// the result is not positive definite.
  Gaussian(const Vec2<T>& mean, const Mat2<T>& cov, T asymmetry_tol = T(1e-12))
      : mean_(mean) {
    using std::abs;
    const T scale = cov.cwiseAbs().maxCoeff();
    asymmetry_ = scale > T(0) ? abs(cov(0, 1) - cov(1, 0)) / scale : T(0);
    if (asymmetry_ > asymmetry_tol) {
      throw Error("covariance asymmetry " + std::to_string(static_cast<double>(asymmetry_)) +
                  " exceeds tolerance");
    }
    cov_ = (cov + cov.transpose()) / T(2);
    require_positive_definite<T>(cov_, "covariance");
  }

  const Vec2<T>& mean() const { return mean_; }
  const Mat2<T>& cov() const { return cov_; }
  T asymmetry() const { return asymmetry_; }

  T log_density(const Vec2<T>& v) const { return gaussian_log_density<T>(v - mean_, cov_); }
  T density(const Vec2<T>& v) const {
    using std::exp;
    return exp(log_density(v));
  }

 private:
  Vec2<T> mean_;
  Mat2<T> cov_;
  T asymmetry_ = T(0);
};

template <typename T>
struct ScaledGaussian {
  T log_weight;
  Gaussian<T> gaussian;

  T value(const Vec2<T>& v) const {
    using std::exp;
    return exp(log_weight + gaussian.log_density(v));
  }
};

template <typename T>
struct GaussianProduct {
  Vec2<T> mean;
  Mat2<T> precision;
  /// (a-b)^T C (a-b) with C = (A^-1 + B^-1)^-1.
  T displaced;
  /// density_a * density_b = exp(log_const) * density_c, pointwise.
  T log_const;
};

/// Product of N(a, A^-1) and N(b, B^-1) given by means and precisions.
template <typename T>
GaussianProduct<T> product(const Vec2<T>& a, const Mat2<T>& A, const Vec2<T>& b,
                           const Mat2<T>& B) {
  using std::log;
  const Mat2<T> P = A + B;
  const T dA = A.determinant(), dB = B.determinant(), dP = P.determinant();
  if (!(dA > T(0)) || !(dB > T(0)) || !(dP > T(0))) {
    throw SingularMatrixError("precision matrix is singular or indefinite");
  }
  const Mat2<T> Pinv = P.inverse();
  GaussianProduct<T> out;
  out.mean = Pinv * (A * a + B * b);
  out.precision = P;
  // C = (A^-1 + B^-1)^-1 = A (A+B)^-1 B.
  const Mat2<T> C = A * Pinv * B;
  const Vec2<T> d = a - b;
  out.displaced = d.dot(C * d);
  out.log_const = (log(dA) + log(dB) - log(dP)) / T(2) - log(T(2) * boost::math::constants::pi<T>()) -
                  out.displaced / T(2);
  return out;
}

/// C1 (C1 + C2)^-1 C2 for symmetric positive C1, C2, written as
/// C - C (C1 + C2)^-1 C with C the smaller of the two. This avoids the loss of
/// significance of the plain product when one factor is nearly degenerate.
template <typename T>
Mat2<T> harmonic_cov(const Mat2<T>& C1, const Mat2<T>& C2) {
  const Mat2<T> K_inv = (C1 + C2).inverse();
  const Mat2<T>& C = C1.trace() < C2.trace() ? C1 : C2;
  const Mat2<T> out = C - C * K_inv * C;
  return (out + out.transpose()) / T(2);
}

/// Factorization of q0(r,z,w) q0(1-s-r,w,0) into a factor in z and a
/// Gaussian in w:
///   log_z_factor = -z^T Gamma_{1-s}^-1 z / 2 - log(2 pi sqrt(det Gamma_{1-s}))
///                  - (1-s) tr A,
///   w ~ N(mean_map z, sigma),  mean_map = Gamma_{1-s-r} e^{-rA^T} Gamma_{1-s}^-1,
///   sigma = mean_map Gamma_r e^{rA^T}.
/// The trace term vanishes for trace-free drift matrices. The stored matrices
/// come from the equivalent forms
///   mean_map = Gamma_{1-s-r} K^-1 e^{rA},  sigma = G_r K^-1 Gamma_{1-s-r},
/// with K = G_r + Gamma_{1-s-r} = e^{rA} Gamma_{1-s} e^{rA^T}; `asymmetry` is
/// that of the product form of sigma.
template <typename T>
struct ChainSplit {
  T log_z_factor;
  Gaussian<T> w_gaussian;
  Mat2<T> mean_map;
  Mat2<T> gamma_outer_inv;  // Gamma_{1-s}^-1
  T asymmetry;
};

inline constexpr double kMinSplitTime = 1e-10;

template <typename T>
ChainSplit<T> lemma31_split(const LQOperator<T>& op, T s, T r, const Vec2<T>& z) {
  using std::abs, std::log;
  const T rest = T(1) - s - r;
  if (r < T(kMinSplitTime) || rest < T(kMinSplitTime)) {
    throw DomainError("degenerate time in chain split: r = " +
                      std::to_string(static_cast<double>(r)) +
                      ", 1-s-r = " + std::to_string(static_cast<double>(rest)));
  }
  const Mat2<T> g_outer = gramian_gamma(op, T(1) - s);
  const Mat2<T> g_outer_inv = g_outer.inverse();
  const Mat2<T> e_r = mat_exp<T>(op.A(), r);
  const Mat2<T> g_rest = gramian_gamma(op, rest);
  const Mat2<T> G_r = gramian_G(op, r);
  const Mat2<T> M = g_rest * (G_r + g_rest).inverse() * e_r;

  const Mat2<T> M_product = g_rest * mat_exp<T>(op.A(), -r).transpose() * g_outer_inv;
  const Mat2<T> sigma_product = M_product * gramian_gamma(op, r) * e_r.transpose();
  const T scale = sigma_product.cwiseAbs().maxCoeff();
  const T asym = scale > T(0) ? abs(sigma_product(0, 1) - sigma_product(1, 0)) / scale : T(0);
  if (asym > T(1e-10)) {
    throw Error("chain split covariance asymmetry " + std::to_string(static_cast<double>(asym)) +
                " exceeds tolerance");
  }

  const T log_z = -z.dot(g_outer_inv * z) / T(2) -
                  log(T(2) * boost::math::constants::pi<T>()) - log(g_outer.determinant()) / T(2) -
                  (T(1) - s) * op.A().trace();
  return ChainSplit<T>{log_z, Gaussian<T>(M * z, harmonic_cov<T>(G_r, g_rest)), M, g_outer_inv,
                       asym};
}

/// E[u1^a u2^b] for u ~ N(0, cov), by Isserlis pairing.
template <typename T>
T central_moment(const Mat2<T>& cov, int a, int b) {
  using std::pow;
  if (a < 0 || b < 0) throw Error("negative moment index");
  if (a + b > kMaxMomentOrder) {
    throw OrderOverflowError("moment order " + std::to_string(a + b) + " exceeds " +
                             std::to_string(kMaxMomentOrder));
  }
  if ((a + b) % 2) return T(0);
  static constexpr std::array<long, 8> kFact = {1, 1, 2, 6, 24, 120, 720, 5040};
  auto dfact = [](int n) {  // (n-1)!!, with (-1)!! = 1
    long v = 1;
    for (int k = n - 1; k > 1; k -= 2) v *= k;
    return v;
  };
  auto choose = [](int n, int k) { return kFact[n] / (kFact[k] * kFact[n - k]); };
  T sum = T(0);
  for (int k = 0; k <= std::min(a, b); ++k) {
    if ((a - k) % 2 || (b - k) % 2) continue;
    const T coef = T(choose(a, k) * choose(b, k) * kFact[k] * dfact(a - k) * dfact(b - k));
    T term = coef;
    for (int i = 0; i < (a - k) / 2; ++i) term *= cov(0, 0);
    for (int i = 0; i < (b - k) / 2; ++i) term *= cov(1, 1);
    for (int i = 0; i < k; ++i) term *= cov(0, 1);
    sum += term;
  }
  return sum;
}

template <typename T>
T central_moment(const Gaussian<T>& g, int a, int b) {
  return central_moment<T>(g.cov(), a, b);
}

template <typename T>
struct MomentTerm {
  T coeff;
  int a;
  int b;
};

/// E[sum coeff w1^a w2^b] under g, expanding around the mean.
template <typename T>
T polynomial_expectation(const Gaussian<T>& g, const std::vector<MomentTerm<T>>& poly) {
  auto choose = [](int n, int k) {
    long v = 1;
    for (int i = 1; i <= k; ++i) v = v * (n - k + i) / i;
    return v;
  };
  T total = T(0);
  for (const auto& term : poly) {
    if (term.a < 0 || term.b < 0) throw Error("negative exponent");
    if (term.a + term.b > kMaxMomentOrder) {
      throw OrderOverflowError("polynomial degree " + std::to_string(term.a + term.b) +
                               " exceeds " + std::to_string(kMaxMomentOrder));
    }
    T acc = T(0);
    for (int i = 0; i <= term.a; ++i) {
      for (int j = 0; j <= term.b; ++j) {
        T m = T(choose(term.a, i) * choose(term.b, j));
        for (int k = 0; k < term.a - i; ++k) m *= g.mean()(0);
        for (int k = 0; k < term.b - j; ++k) m *= g.mean()(1);
        acc += m * central_moment<T>(g.cov(), i, j);
      }
    }
    total += term.coeff * acc;
  }
  return total;
}

}  // namespace hypoheat
