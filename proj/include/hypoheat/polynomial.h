#pragma once

// Sparse multivariate polynomials with Gaussian expectation over variable
// pairs. Used to carry the integrands of the chained Duhamel reductions.

#include <array>
#include <cmath>
#include <map>
#include <utility>

#include "hypoheat/errors.h"
#include "hypoheat/gauss_algebra.h"

namespace hypoheat {

template <typename T, int N>
class Polynomial {
 public:
  using Exponents = std::array<int, N>;
  using Terms = std::map<Exponents, T>;

  Polynomial() = default;

  static Polynomial constant(T c) {
    Polynomial p;
    if (c != T(0)) p.terms_[Exponents{}] = c;
    return p;
  }

  /// The monomial x_i (0-based).
  static Polynomial variable(int i) {
    Polynomial p;
    Exponents e{};
    e[i] = 1;
    p.terms_[e] = T(1);
    return p;
  }

  /// sum_k coeffs(k) x_{first + k}.
  template <typename Vec>
  static Polynomial linear(const Vec& coeffs, int first) {
    Polynomial p;
    for (int k = 0; k < coeffs.size(); ++k) {
      if (coeffs(k) == T(0)) continue;
      Exponents e{};
      e[first + k] = 1;
      p.terms_[e] = coeffs(k);
    }
    return p;
  }

  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) {
      int sum = 0;
      for (int v : e) sum += v;
      d = std::max(d, sum);
    }
    return d;
  }

  Polynomial& operator+=(const Polynomial& o) {
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    for (const auto& [e, c] : o.terms_) add_term(e, -c);
    return *this;
  }
  Polynomial& operator*=(T s) {
    if (s == T(0)) {
      terms_.clear();
    } else {
      for (auto& [e, c] : terms_) c *= s;
    }
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, T s) { return a *= s; }
  friend Polynomial operator*(T s, Polynomial a) { return a *= s; }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    Polynomial out;
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        Exponents e;
        for (int k = 0; k < N; ++k) e[k] = ea[k] + eb[k];
        out.add_term(e, ca * cb);
      }
    }
    return out;
  }

  Polynomial pow(int n) const {
    Polynomial out = constant(T(1));
    for (int k = 0; k < n; ++k) out = out * *this;
    return out;
  }

  /// Replaces every x_k by images[k].
  Polynomial substitute(const std::array<Polynomial, N>& images) const {
    Polynomial out;
    std::array<std::vector<Polynomial>, N> powers;
    for (const auto& [e, c] : terms_) {
      Polynomial term = constant(c);
      for (int k = 0; k < N; ++k) {
        if (e[k] == 0) continue;
        auto& cache = powers[k];
        if (cache.empty()) cache.push_back(constant(T(1)));
        while (static_cast<int>(cache.size()) <= e[k]) cache.push_back(cache.back() * images[k]);
        term = term * cache[e[k]];
      }
      out += term;
    }
    return out;
  }

  /// Expectation over (x_i, x_j) ~ N(0, cov), leaving the other variables.
  Polynomial expect_pair(int i, int j, const Mat2<T>& cov) const {
    Polynomial out;
    for (const auto& [e, c] : terms_) {
      const T m = central_moment<T>(cov, e[i], e[j]);
      if (m == T(0)) continue;
      Exponents rest = e;
      rest[i] = 0;
      rest[j] = 0;
      out.add_term(rest, c * m);
    }
    return out;
  }

  /// Same with absolute moments bounded by Cauchy-Schwarz, applied to the
  /// absolute coefficient values. The result dominates E|p| for |x| >= 0.
  Polynomial expect_pair_abs_bound(int i, int j, const Mat2<T>& cov) const {
    using std::abs, std::sqrt;
    Polynomial out;
    for (const auto& [e, c] : terms_) {
      const T m2a = abs_moment(cov(0, 0), e[i]);
      const T m2b = abs_moment(cov(1, 1), e[j]);
      Exponents rest = e;
      rest[i] = 0;
      rest[j] = 0;
      out.add_term(rest, abs(c) * sqrt(m2a * m2b));
    }
    return out;
  }

  T evaluate(const std::array<T, N>& x) const {
    T sum = T(0);
    for (const auto& [e, c] : terms_) {
      T term = c;
      for (int k = 0; k < N; ++k) {
        for (int p = 0; p < e[k]; ++p) term *= x[k];
      }
      sum += term;
    }
    return sum;
  }

  /// Drops terms whose coefficient is below `tol` times the largest one.
  void prune(T tol) {
    using std::abs;
    T big = T(0);
    for (const auto& [e, c] : terms_) big = std::max(big, abs(c));
    for (auto it = terms_.begin(); it != terms_.end();) {
      it = abs(it->second) <= tol * big ? terms_.erase(it) : std::next(it);
    }
  }

 private:
  // E[u^{2n}] for u ~ N(0, var), (2n-1)!! var^n for any n.
  static T abs_moment(T var, int n) {
    T v = T(1);
    for (int k = 1; k <= n; ++k) v *= T(2 * k - 1) * var;
    return v;
  }

  void add_term(const Exponents& e, T c) {
    if (c == T(0)) return;
    auto [it, inserted] = terms_.try_emplace(e, c);
    if (!inserted) {
      it->second += c;
      if (it->second == T(0)) terms_.erase(it);
    }
  }

  Terms terms_;
};

}  // namespace hypoheat
