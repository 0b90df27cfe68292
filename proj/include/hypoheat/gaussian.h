#pragma once

// Gaussian fundamental solutions of linear-quadratic operators
//
//   d/dt - (Ax).grad - 1/2 (b b^T) : Hess
//
// on the plane. Everything is templated on the scalar so the Duhamel engine
// can run its reductions in extended precision.

#include <cmath>
#include <boost/math/constants/constants.hpp>

#include <Eigen/Core>
#include <Eigen/LU>
#include <boost/math/quadrature/gauss.hpp>

#include "hypoheat/errors.h"

namespace hypoheat {

template <typename T>
using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T>
using Mat2 = Eigen::Matrix<T, 2, 2>;

/// det[b | A b] is nonzero relative to the factor norms. Zero norms fail.
template <typename T>
bool kalman_ok(const Mat2<T>& A, const Vec2<T>& b) {
  using std::abs;
  const Vec2<T> Ab = A * b;
  const T nb = b.norm();
  const T nab = Ab.norm();
  if (nb == T(0) || nab == T(0)) return false;
  const T det = b(0) * Ab(1) - b(1) * Ab(0);
  return abs(det) > T(1e-12) * nb * nab;
}

template <typename T>
class LQOperator {
 public:
  LQOperator(const Mat2<T>& A, const Vec2<T>& b) : A_(A), b_(b) {
    if (!kalman_ok(A, b)) {
      throw HypothesisError('k', "rank[b, Ab] < 2: the Kalman condition fails");
    }
  }

  /// A = [[0,0],[S,0]], b = (1,0).
  static LQOperator kolmogorov(T S) {
    Mat2<T> A;
    A << T(0), T(0), S, T(0);
    return LQOperator(A, Vec2<T>(T(1), T(0)));
  }

  const Mat2<T>& A() const { return A_; }
  const Vec2<T>& b() const { return b_; }
  bool nilpotent() const { return (A_ * A_).cwiseAbs().maxCoeff() == T(0); }

  template <typename U>
  LQOperator<U> cast() const {
    return LQOperator<U>(A_.template cast<U>(), b_.template cast<U>());
  }

 private:
  Mat2<T> A_;
  Vec2<T> b_;
};

/// exp(tA) in closed form. With M = tA = tau I + N, tr N = 0, N^2 = delta I.
template <typename T>
Mat2<T> mat_exp(const Mat2<T>& A, T t) {
  using std::cos, std::cosh, std::exp, std::sin, std::sinh, std::sqrt, std::abs;
  const Mat2<T> M = t * A;
  const T tau = M.trace() / T(2);
  const Mat2<T> N = M - tau * Mat2<T>::Identity();
  const T delta = -N.determinant();
  T c, sc;  // cosh(sqrt(delta)) and sinh(sqrt(delta))/sqrt(delta), analytically continued
  if (abs(delta) < T(1e-3)) {
    // Even Taylor series; truncation is below 1e-21 here.
    c = T(1), sc = T(1);
    T term_c = T(1), term_s = T(1);
    for (int k = 1; k <= 6; ++k) {
      term_c *= delta / T((2 * k - 1) * (2 * k));
      term_s *= delta / T((2 * k) * (2 * k + 1));
      c += term_c;
      sc += term_s;
    }
  } else if (delta > T(0)) {
    const T q = sqrt(delta);
    c = cosh(q);
    sc = sinh(q) / q;
  } else {
    const T q = sqrt(-delta);
    c = cos(q);
    sc = sin(q) / q;
  }
  return exp(tau) * (c * Mat2<T>::Identity() + sc * N);
}

/// Gamma_t = int_0^t exp(-A tau) b b^T exp(-A^T tau) d tau.
template <typename T>
Mat2<T> gramian_gamma(const LQOperator<T>& op, T t) {
  using std::abs;
  if (t < T(0)) throw DomainError("Gramian requested at negative time");
  const Mat2<T>& A = op.A();
  const Mat2<T> bb = op.b() * op.b().transpose();
  if (op.nilpotent()) {
    const Mat2<T> Abb = A * bb;
    return t * bb - (t * t / T(2)) * (Abb + Abb.transpose()) +
           (t * t * t / T(3)) * (Abb * A.transpose());
  }
  using Rule = boost::math::quadrature::gauss<T, 20>;
  auto panel_sum = [&](int panels) {
    Mat2<T> sum = Mat2<T>::Zero();
    const T h = t / T(panels);
    for (int p = 0; p < panels; ++p) {
      const T mid = h * (T(p) + T(0.5));
      for (std::size_t k = 0; k < Rule::abscissa().size(); ++k) {
        const T x = Rule::abscissa()[k];
        const T w = Rule::weights()[k] * h / T(2);
        for (int sgn = (x == T(0) ? 1 : -1); sgn <= 1; sgn += 2) {
          const Mat2<T> E = mat_exp<T>(A, -(mid + T(sgn) * x * h / T(2)));
          sum += w * (E * bb * E.transpose());
        }
      }
    }
    return sum;
  };
  Mat2<T> prev = panel_sum(1);
  for (int panels = 2; panels <= 1 << 12; panels *= 2) {
    Mat2<T> next = panel_sum(panels);
    if ((next - prev).norm() <= T(1e-12) * next.norm()) return next;
    prev = next;
  }
  return prev;
}

/// G_t = exp(tA) Gamma_t exp(tA)^T.
template <typename T>
Mat2<T> gramian_G(const LQOperator<T>& op, T t) {
  const Mat2<T> E = mat_exp<T>(op.A(), t);
  return E * gramian_gamma(op, t) * E.transpose();
}

/// Throws SingularMatrixError unless det C > 0 relative to its diagonal.
template <typename T>
void require_positive_definite(const Mat2<T>& C, const char* what) {
  const T diag = C(0, 0) * C(1, 1);
  const T det = C.determinant();
  if (!(C(0, 0) > T(0)) || !(C(1, 1) > T(0)) || !(det > T(1e-14) * diag)) {
    throw SingularMatrixError(std::string(what) + " is not positive definite");
  }
}

template <typename T>
T gaussian_log_density(const Vec2<T>& v, const Mat2<T>& cov) {
  using std::log;
  const T quad = v.dot(cov.inverse() * v);
  return -quad / T(2) - log(T(2) * boost::math::constants::pi<T>()) - log(cov.determinant()) / T(2);
}

/// q0(t,x,y) = N(y; exp(tA) x, G_t), with respect to Lebesgue measure.
template <typename T>
T kernel_eval(const LQOperator<T>& op, T t, const Vec2<T>& x, const Vec2<T>& y) {
  using std::exp;
  if (!(t > T(0))) throw SingularMatrixError("kernel requested at t <= 0");
  const Mat2<T> G = gramian_G(op, t);
  require_positive_definite<T>(G, "G_t");
  return exp(gaussian_log_density<T>(y - mat_exp<T>(op.A(), t) * x, G));
}

/// |eps^4 p0(eps^2 t, (eps x1, eps^3 x2), (eps y1, eps^3 y2)) - p0(t,x,y)| for
/// the unit Kolmogorov operator.
inline double rescale_residual(double t, double eps, const Vec2<double>& x,
                               const Vec2<double>& y) {
  const auto op = LQOperator<double>::kolmogorov(1.0);
  const Vec2<double> xs(eps * x(0), eps * eps * eps * x(1));
  const Vec2<double> ys(eps * y(0), eps * eps * eps * y(1));
  const double e4 = eps * eps * eps * eps;
  return std::abs(e4 * kernel_eval(op, eps * eps * t, xs, ys) - kernel_eval(op, t, x, y));
}

}  // namespace hypoheat
