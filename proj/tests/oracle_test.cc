#include "hypoheat/oracle.h"

#include <cmath>
#include <cstdlib>
#include <numbers>

#include <boost/random/normal_distribution.hpp>
#include <gtest/gtest.h>

#include "hypoheat/errors.h"
#include "hypoheat/gaussian.h"

namespace hypoheat {
namespace {

using V = Vec2<double>;

VectorFieldPair kolmogorov_pair() {
  return {VectorField::parse("0", "x1"), VectorField::parse("1", "0")};
}

VectorFieldPair quadratic_pair() {
  return {VectorField::parse("0", "x1 + 0.5*x1^2"), VectorField::parse("1", "0")};
}

const double kLeading = std::sqrt(12.0) / (2 * std::numbers::pi);

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) { setenv("HYPOHEAT_THREADS", value, 1); }
  ~ThreadsEnv() { unsetenv("HYPOHEAT_THREADS"); }
};

GTEST_TEST(SimConfigTest, Validate) {
  EXPECT_NO_THROW(SimConfig{}.validate());
  auto bad = [](auto mutate) {
    SimConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](SimConfig& c) { c.n_paths = 0; });
  bad([](SimConfig& c) { c.dt = 0; });
  bad([](SimConfig& c) { c.t_grid = {}; });
  bad([](SimConfig& c) { c.t_grid = {0.1, 0.1}; });
  bad([](SimConfig& c) { c.t_grid = {0.2, 0.1}; });
  bad([](SimConfig& c) { c.t_grid = {-1}; });
  bad([](SimConfig& c) { c.bandwidth = 0.0; });
}

GTEST_TEST(DriftTest, ConstantX1HasNoCorrection) {
  const VectorFieldPair k = kolmogorov_pair();
  const VectorField d = ito_drift(k);
  const VectorField s = simulation_drift(k, V(0, 0));
  for (const V& p : {V(0.3, -1), V(-2, 0.5)}) {
    EXPECT_EQ(d.at(p), k.X0.at(p));
    EXPECT_EQ(s.at(p), k.X0.at(p));
  }
}

GTEST_TEST(DriftTest, StratonovichCorrection) {
  const VectorFieldPair pair{VectorField::parse("0", "x1"), VectorField::parse("x1", "0")};
  const VectorField d = ito_drift(pair);
  for (double x1 : {0.5, 1.0, 2.0}) {
    EXPECT_DOUBLE_EQ(d.at(V(x1, 0.3))(0), 0.5 * x1);
    EXPECT_EQ(d.at(V(x1, 0.3))(1), x1);
  }
}

GTEST_TEST(DriftTest, DivergenceRepackaging) {
  // rho = 1/(1 + x1), so div_mu(d1) = -1/(1 + x1).
  const VectorField y0 = generator_drift(quadratic_pair(), V(0, 0));
  for (double x1 : {-0.5, 0.0, 0.7}) {
    EXPECT_NEAR(y0.at(V(x1, 0.2))(0), -0.5 / (1 + x1), 1e-15);
    EXPECT_NEAR(y0.at(V(x1, 0.2))(1), x1 + 0.5 * x1 * x1, 1e-15);
  }
}

GTEST_TEST(SplitMix64Test, CounterBased) {
  SplitMix64 a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  const auto a0 = a(), b0 = b();
  EXPECT_EQ(a0, b0);
  EXPECT_NE(a0, c());
  EXPECT_NE(a0, d());
  EXPECT_NE(a0, a());
  SplitMix64 e(1, 0);
  boost::random::normal_distribution<double> normal;
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = normal(e);
    sum += z;
    sq += z * z;
  }
  EXPECT_LT(std::abs(sum / n), 4 / std::sqrt(n));
  EXPECT_LT(std::abs(sq / n - 1), 4 * std::sqrt(2.0 / n));
}

GTEST_TEST(SimulateTest, BrownianVariance) {
  const VectorFieldPair bm{VectorField::parse("0", "0"), VectorField::parse("1", "0")};
  SimConfig cfg;
  cfg.n_paths = 100000;
  cfg.dt = 0.05;
  cfg.t_grid = {0.5};
  const auto ends = simulate_endpoints(bm, V(0, 0), cfg);
  double sum = 0, sq = 0;
  for (const V& x : ends[0].x) {
    sum += x(0);
    sq += x(0) * x(0);
    EXPECT_EQ(x(1), 0.0);
  }
  const double n = cfg.n_paths;
  const double var = (sq - sum * sum / n) / (n - 1);
  EXPECT_LT(std::abs(var - 0.5), 4 * 0.5 * std::sqrt(2 / (n - 1)));
}

GTEST_TEST(SimulateTest, KolmogorovLaw) {
  const VectorFieldPair k = kolmogorov_pair();
  const auto op = LQOperator<double>::kolmogorov(1.0);
  SimConfig cfg;
  cfg.n_paths = 100000;
  cfg.t_grid = {0.25, 1.0};
  cfg.seed = 3;
  const auto ends = simulate_endpoints(k, V(0, 0), cfg);
  ASSERT_EQ(ends.size(), 2u);
  const double n = cfg.n_paths;
  for (const EndpointSet& e : ends) {
    const Mat2<double> G = gramian_G(op, e.t);
    V mean = V::Zero();
    Mat2<double> cov = Mat2<double>::Zero();
    for (const V& x : e.x) {
      mean += x;
      cov += x * x.transpose();
    }
    mean /= n;
    cov = cov / n - mean * mean.transpose();
    for (int i = 0; i < 2; ++i) {
      EXPECT_LT(std::abs(mean(i)), 4 * std::sqrt(G(i, i) / n)) << "t=" << e.t;
      for (int j = 0; j < 2; ++j) {
        const double se = std::sqrt((G(i, i) * G(j, j) + G(i, j) * G(i, j)) / n);
        EXPECT_LT(std::abs(cov(i, j) - G(i, j)), 4 * se) << "t=" << e.t << " " << i << j;
      }
    }
    if (e.t == 1.0) {
      const DensityEstimate d = estimate_density(e, V(0, 0), k, 0.5);
      EXPECT_LT(std::abs(d.value - kLeading), 4 * d.std_error);
      EXPECT_EQ(d.n_effective, cfg.n_paths);
    }
  }
}

GTEST_TEST(SimulateTest, Reproducible) {
  SimConfig cfg;
  cfg.n_paths = 10001;
  cfg.dt = 0.01;
  cfg.t_grid = {0.5, 1.0};
  cfg.seed = 99;
  const VectorFieldPair q = quadratic_pair();
  std::vector<EndpointSet> one, many;
  {
    ThreadsEnv env("1");
    one = simulate_endpoints(q, V(0, 0), cfg);
  }
  {
    ThreadsEnv env("3");
    many = simulate_endpoints(q, V(0, 0), cfg);
  }
  const auto again = simulate_endpoints(q, V(0, 0), cfg);
  for (std::size_t k = 0; k < one.size(); ++k) {
    for (std::size_t i = 0; i < cfg.n_paths; ++i) {
      for (int c = 0; c < 2; ++c) {
        const double a = one[k].x[i](c), b = many[k].x[i](c), d = again[k].x[i](c);
        ASSERT_TRUE(a == b || (std::isnan(a) && std::isnan(b)));
        ASSERT_TRUE(a == d || (std::isnan(a) && std::isnan(d)));
      }
    }
  }
  cfg.seed = 100;
  const auto other = simulate_endpoints(q, V(0, 0), cfg);
  EXPECT_NE(other[0].x[0](0), one[0].x[0](0));
}

GTEST_TEST(SimulateTest, BlowUpReportsLowestPath) {
  const VectorFieldPair wild{VectorField::parse("x1^3", "x1"), VectorField::parse("1", "0")};
  SimConfig cfg;
  cfg.n_paths = 10000;
  cfg.t_grid = {1.0};
  for (const char* threads : {"1", "3"}) {
    ThreadsEnv env(threads);
    try {
      simulate_endpoints(wild, V(2, 0), cfg);
      FAIL();
    } catch (const SimulationError& e) {
      EXPECT_EQ(e.index(), 0u);
    }
  }
}

GTEST_TEST(SimulateTest, StoppedPathsStayStopped) {
  const VectorFieldPair q = quadratic_pair();
  SimConfig cfg;
  cfg.n_paths = 4000;
  cfg.dt = 0.01;
  cfg.t_grid = {0.2, 1.0};
  const auto ends = simulate_endpoints(q, V(0, 0), cfg);
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < cfg.n_paths; ++i) {
    if (std::isnan(ends[0].x[i](0))) EXPECT_TRUE(std::isnan(ends[1].x[i](0)));
    if (std::isnan(ends[1].x[i](0))) {
      ++stopped;
    } else {
      EXPECT_GE(1 + ends[1].x[i](0), 0.05);
    }
  }
  EXPECT_GT(stopped, 0u);
  EXPECT_EQ(estimate_density(ends[1], V(0, 0), q).n_effective, cfg.n_paths - stopped);
}

EndpointSet synthetic_endpoints(std::size_t n, double s1, double s2) {
  EndpointSet e;
  e.t = 1;
  SplitMix64 rng(5, 0);
  boost::random::normal_distribution<double> normal;
  for (std::size_t i = 0; i < n; ++i) e.x.emplace_back(s1 * normal(rng), s2 * normal(rng));
  return e;
}

GTEST_TEST(DensityTest, ScalingIdentity) {
  const VectorFieldPair k = kolmogorov_pair();
  const EndpointSet e = synthetic_endpoints(5000, 1.0, 0.4);
  EndpointSet scaled = e;
  for (V& x : scaled.x) x = V(2 * x(0), 3 * x(1));
  for (std::optional<double> bw : {std::optional<double>{}, std::optional<double>{0.4}}) {
    const DensityEstimate a = estimate_density(e, V(0, 0), k, bw);
    const DensityEstimate b = estimate_density(scaled, V(0, 0), k, bw);
    EXPECT_NEAR(b.value, a.value / 6, 1e-13 * a.value);
    EXPECT_NEAR(b.h1, 2 * a.h1, 1e-13);
    EXPECT_NEAR(b.h2, 3 * a.h2, 1e-13);
  }
}

GTEST_TEST(DensityTest, VolumeConversion) {
  const EndpointSet e = synthetic_endpoints(3000, 1.0, 1.0);
  const VectorFieldPair s2{VectorField::parse("0", "2*x1"), VectorField::parse("1", "0")};
  const double lebesgue = estimate_density(e, V(0, 0), kolmogorov_pair()).value;
  EXPECT_NEAR(estimate_density(e, V(0, 0), s2).value, 2 * lebesgue, 1e-14);
  EXPECT_EQ(estimate_density(e, V(0, 0), quadratic_pair()).value, lebesgue);
}

GTEST_TEST(DensityTest, GaussianSample) {
  const EndpointSet e = synthetic_endpoints(200000, 1.0, 0.5);
  const DensityEstimate d = estimate_density(e, V(0, 0), kolmogorov_pair(), 0.5);
  const double exact = 1 / (2 * std::numbers::pi * 0.5);
  EXPECT_LT(std::abs(d.value - exact), 4 * d.std_error);
  EXPECT_GT(d.std_error, 0);
}

GTEST_TEST(DensityTest, Degenerate) {
  EndpointSet e;
  EXPECT_THROW(estimate_density(e, V(0, 0), kolmogorov_pair()), DomainError);
  e.x.assign(100, V(1, 2));
  EXPECT_THROW(estimate_density(e, V(0, 0), kolmogorov_pair()), DomainError);
}

GTEST_TEST(DensityTest, FreshSeedDoubledPaths) {
  const VectorFieldPair k = kolmogorov_pair();
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.n_paths = 20000;
  cfg.seed = 11;
  const DensityEstimate a = estimate_density(simulate_endpoints(k, V(0, 0), cfg)[0], V(0, 0), k, 0.5);
  cfg.n_paths = 40000;
  cfg.seed = 12;
  const DensityEstimate b = estimate_density(simulate_endpoints(k, V(0, 0), cfg)[0], V(0, 0), k, 0.5);
  EXPECT_LT(std::abs(a.value - b.value),
            4 * std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error));
}

std::vector<DensityEstimate> from_ratios(const std::vector<double>& t, auto ratio, double se) {
  std::vector<DensityEstimate> out;
  for (double s : t) out.push_back({kLeading / (s * s) * ratio(s), se, 1, 0, 0});
  return out;
}

GTEST_TEST(FitTest, ExactLinear) {
  const std::vector<double> t = {0.05, 0.1, 0.2, 0.3, 0.4};
  const CoefficientFit f = fit_coefficient(t, from_ratios(t, [](double s) { return 1 - 0.3429 * s; }, 0));
  EXPECT_NEAR(f.c, -0.3429, 1e-12);
  EXPECT_NEAR(f.std_error, 0, 1e-12);
  EXPECT_NEAR(f.r_squared, 1, 1e-12);
}

GTEST_TEST(FitTest, ExactKolmogorov) {
  const std::vector<double> t = {0.1, 0.2, 0.3};
  const CoefficientFit f = fit_coefficient(t, from_ratios(t, [](double) { return 1.0; }, 0.01));
  EXPECT_NEAR(f.c, 0, 1e-14);
  EXPECT_GT(f.std_error, 0);
}

GTEST_TEST(FitTest, WeightedError) {
  // sigma_r = se 2 pi t^2 / sqrt(12) and stderr(c) = (sum t^2 / sigma_r^2)^(-1/2).
  const std::vector<double> t = {0.1, 0.2, 0.4};
  std::vector<DensityEstimate> est;
  double info = 0;
  for (double s : t) {
    const double se = 0.02 * kLeading / (s * s);
    est.push_back({kLeading / (s * s), se, 1, 0, 0});
    info += s * s / (0.02 * 0.02);
  }
  EXPECT_NEAR(fit_coefficient(t, est).std_error, 1 / std::sqrt(info), 1e-14);
}

GTEST_TEST(FitTest, IllPosed) {
  const auto one = [](double) { return 1.0; };
  EXPECT_THROW(fit_coefficient({0.1, 0.2}, from_ratios({0.1, 0.2}, one, 0.1)), DomainError);
  EXPECT_THROW(fit_coefficient({0.2, 0.2, 0.2}, from_ratios({0.2, 0.2, 0.2}, one, 0.1)),
               DomainError);
}

GTEST_TEST(FitTest, KolmogorovConsistentWithZero) {
  SimConfig cfg;
  cfg.n_paths = 40000;
  cfg.t_grid = {0.1, 0.2, 0.3};
  cfg.bandwidth = 0.5;
  cfg.seed = 21;
  const MonteCarloCoefficient m = montecarlo_coefficient(kolmogorov_pair(), V(0, 0), cfg);
  ASSERT_EQ(m.estimates.size(), 3u);
  EXPECT_LT(std::abs(m.fit.c), 3 * m.fit.std_error);
}

double bump_reference(double T, double sigma) {
  const auto op = LQOperator<double>::kolmogorov(1.0);
  const Mat2<double> C = gramian_G(op, T) + sigma * sigma * Mat2<double>::Identity();
  return sigma * sigma / std::sqrt(C.determinant());
}

FDGrid benchmark_grid(int n) {
  FDGrid g;
  g.x1_min = -3;
  g.x1_max = 3;
  g.x2_min = -1;
  g.x2_max = 1;
  g.nx1 = n;
  g.nx2 = n;
  return g;
}

const Expr& bump() {
  static const Expr e = parse("exp(-(x1^2 + x2^2) / (2*0.0225))");
  return e;
}

GTEST_TEST(FDTest, KolmogorovBenchmark) {
  const double exact = bump_reference(0.25, 0.15);
  const FDResult coarse = fd_evolve(kolmogorov_pair(), V(0, 0), bump(), 0.25, benchmark_grid(200));
  const FDResult fine = fd_evolve(kolmogorov_pair(), V(0, 0), bump(), 0.25, benchmark_grid(400));
  EXPECT_LT(std::abs(fine.value / exact - 1), 0.02);
  EXPECT_FALSE(fine.boundary_warning);
  const double ratio = std::abs(coarse.value - exact) / std::abs(fine.value - exact);
  EXPECT_GE(ratio, 1.7);
  EXPECT_LE(ratio, 2.3);
}

GTEST_TEST(FDTest, MassConservation) {
  FDGrid g;
  g.x1_min = -5;
  g.x1_max = 5;
  g.x2_min = -2;
  g.x2_max = 2;
  g.nx1 = 201;
  g.nx2 = 201;
  const FDResult r = fd_evolve(kolmogorov_pair(), V(0, 0), Expr::constant(1), 0.25, g);
  EXPECT_NEAR(r.value, 1.0, 0.01);
}

GTEST_TEST(FDTest, InitialCondition) {
  FDGrid g = benchmark_grid(101);
  const FDResult r = fd_evolve(kolmogorov_pair(), V(0, 0), bump(), 0.0, g);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.steps, 0);
  const FDResult s = fd_evolve(kolmogorov_pair(), V(0, 0), bump(), 1e-6, g);
  EXPECT_NEAR(s.value, 1.0, 1e-3);
}

GTEST_TEST(FDTest, Errors) {
  FDGrid g = benchmark_grid(101);
  g.dt = 2 * fd_stable_dt(kolmogorov_pair(), V(0, 0), g);
  EXPECT_THROW(fd_evolve(kolmogorov_pair(), V(0, 0), bump(), 0.1, g), StabilityError);
  const VectorFieldPair bent{VectorField::parse("0", "x1"), VectorField::parse("1", "x1")};
  EXPECT_THROW(fd_evolve(bent, V(0, 0), bump(), 0.1, benchmark_grid(101)), HypothesisError);
  EXPECT_THROW(fd_evolve(kolmogorov_pair(), V(2.99, 0), bump(), 0.1, benchmark_grid(101)),
               ConfigError);
}

GTEST_TEST(FDTest, BoundaryWarning) {
  FDGrid g;
  g.x1_min = -0.5;
  g.x1_max = 0.5;
  g.x2_min = -0.3;
  g.x2_max = 0.3;
  g.nx1 = 81;
  g.nx2 = 81;
  const FDResult r = fd_evolve(kolmogorov_pair(), V(0, 0), bump(), 0.25, g);
  EXPECT_TRUE(r.boundary_warning);
  EXPECT_GT(r.boundary_ratio, 1e-6);
}

GTEST_TEST(FDCoefficientTest, KolmogorovIsZero) {
  FDGrid g;
  g.nx1 = 60;
  g.nx2 = 60;
  const FDCoefficient r = fd_coefficient(kolmogorov_pair(), V(0, 0), {0.1, 0.2, 0.3}, g);
  EXPECT_EQ(r.fit.c, 0.0);
  for (double x : r.ratio) EXPECT_EQ(x, 1.0);
}

GTEST_TEST(FDCoefficientTest, ConstantDrift) {
  // The kernel ratio at (0, 0) is exp(-0.18 t); fit it the same way.
  const VectorFieldPair drift{VectorField::parse("0.6", "x1"), VectorField::parse("1", "0")};
  const std::vector<double> t = {0.05, 0.1, 0.2, 0.3, 0.4};
  const CoefficientFit exact =
      fit_coefficient(t, from_ratios(t, [](double s) { return std::exp(-0.18 * s); }, 0));
  FDGrid g;
  g.nx1 = 200;
  g.nx2 = 400;
  const FDCoefficient r = fd_coefficient(drift, V(0, 0), t, g);
  EXPECT_NEAR(r.fit.c, exact.c, 0.01);
  EXPECT_FALSE(r.boundary_warning);
}

GTEST_TEST(FDCoefficientTest, QuadraticPair) {
  FDGrid g;
  g.nx1 = 200;
  g.nx2 = 400;
  const FDCoefficient r =
      fd_coefficient(quadratic_pair(), V(0, 0), {0.05, 0.1, 0.2, 0.3, 0.4}, g);
  EXPECT_NEAR(r.fit.c, -12.0 / 35, 0.1 * 12.0 / 35);
}

}  // namespace
}  // namespace hypoheat
