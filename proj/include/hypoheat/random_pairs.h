#pragma once

// Random polynomial vector-field pairs in chart form, for identity sweeps.

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "hypoheat/geometry.h"

namespace hypoheat {

/// sum c_ij x1^i x2^j over 1 <= i + j <= degree (plus a constant if asked),
/// coefficients uniform in [-1, 1], printed in the parser's grammar.
inline std::string random_polynomial(std::mt19937& gen, int degree, bool constant_term,
                                     double* d1_coeff = nullptr) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::ostringstream out;
  out.precision(17);
  out << (constant_term ? u(gen) : 0.0);
  for (int total = 1; total <= degree; ++total) {
    for (int i = total; i >= 0; --i) {
      const int j = total - i;
      double c = u(gen);
      if (i == 1 && j == 0 && d1_coeff) {
        if (std::abs(c) < 0.2) c = std::copysign(0.2 + std::abs(c), c);
        *d1_coeff = c;
      }
      out << " + (" << c << ")";
      if (i) out << "*x1^" << i;
      if (j) out << "*x2^" << j;
    }
  }
  return out.str();
}

/// X1 = d1 and X0 = alpha1 d1 + alpha2 d2 with alpha2(0) = 0 and
/// |d1 alpha2(0)| >= 0.2, so both hypotheses hold at the origin.
inline VectorFieldPair random_chart_pair(std::mt19937& gen, int degree = 4) {
  double S = 0;
  const std::string a1 = random_polynomial(gen, degree, true);
  const std::string a2 = random_polynomial(gen, degree, false, &S);
  return {VectorField::parse(a1, a2), VectorField::parse("1", "0")};
}

}  // namespace hypoheat
