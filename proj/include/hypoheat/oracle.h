#pragma once

// Independent checks of the diagonal expansion: Euler-Maruyama Monte Carlo
// with a kernel density estimate at the base point, an explicit upwind
// finite-difference solver for the backward equation, and the fit of the
// first-order coefficient.

#include <cstdint>
#include <optional>
#include <vector>

#include "hypoheat/geometry.h"

namespace hypoheat {

struct SimConfig {
  std::size_t n_paths = 100000;
  double dt = 1e-3;
  std::vector<double> t_grid = {1.0};
  /// Multiplier on the normal-reference bandwidths; nullopt means 1.
  std::optional<double> bandwidth;
  std::uint64_t seed = 1;
  double blowup_radius = 1e6;
  /// Paths are stopped once det[X1|X2] falls below this fraction of its
  /// value at the base point (sign included); they no longer contribute to
  /// any estimate.
  /// Inactive when the frame is degenerate at the base point.
  double chart_floor = 0.05;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Generator drift Y0 = X0 + div_mu(X1) X1 / 2 for the canonical volume at x0.
VectorField generator_drift(const VectorFieldPair& pair, const Vec2<double>& x0);

/// X0 + (DX1) X1 / 2, the drift of the Ito form of the Stratonovich equation.
VectorField ito_drift(const VectorFieldPair& pair);

/// Ito drift of the simulated equation: ito_drift({Y0, X1}) when the frame
/// {X1, [X0,X1]} is nondegenerate at x0, else ito_drift(pair).
VectorField simulation_drift(const VectorFieldPair& pair, const Vec2<double>& x0);

/// Counter-based 64-bit stream: output k of stream (seed, index) depends only
/// on those three numbers.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  SplitMix64(std::uint64_t seed, std::uint64_t index);
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

 private:
  std::uint64_t state_;
};

struct EndpointSet {
  double t = 0.0;
  /// One entry per path; stopped paths hold NaN.
  std::vector<Vec2<double>> x;
};

/// Endpoints at every time of cfg.t_grid. Deterministic in (seed, cfg) for
/// any worker count. Throws SimulationError with the lowest offending path
/// index on blow-up.
std::vector<EndpointSet> simulate_endpoints(const VectorFieldPair& pair, const Vec2<double>& x0,
                                            const SimConfig& cfg);

struct DensityEstimate {
  double value = 0.0;   // density at x0 with respect to mu
  double std_error = 0.0;
  std::size_t n_effective = 0;  // paths still running at time t
  double h1 = 0.0;
  double h2 = 0.0;
};

inline constexpr int kDensityBatches = 16;

/// Product Gaussian kernel estimate at x0. Bandwidths are scale * sigma_j *
/// n^{-1/6} from the live samples; the Lebesgue value is divided by
/// rho(x0). std_error comes from 16 contiguous batches of paths.
DensityEstimate estimate_density(const EndpointSet& endpoints, const Vec2<double>& x0,
                                 const VectorFieldPair& pair,
                                 std::optional<double> bandwidth = std::nullopt);

struct CoefficientFit {
  double c = 0.0;
  double std_error = 0.0;
  double r_squared = 0.0;
};

/// r(t) = estimate(t) 2 pi t^2 / sqrt(12) fitted by weighted least squares to
/// 1 + c t with weights 1 / stderr^2. When any stderr is zero the fit is
/// unweighted and the error comes from the residuals.
CoefficientFit fit_coefficient(const std::vector<double>& t,
                               const std::vector<DensityEstimate>& estimates);

struct MonteCarloCoefficient {
  CoefficientFit fit;
  std::vector<double> t;
  std::vector<DensityEstimate> estimates;
};

/// Independent simulations per time of cfg.t_grid, then fit_coefficient.
MonteCarloCoefficient montecarlo_coefficient(const VectorFieldPair& pair, const Vec2<double>& x0,
                                             const SimConfig& cfg);

struct FDGrid {
  double x1_min = -3.0;
  double x1_max = 3.0;
  double x2_min = -1.0;
  double x2_max = 1.0;
  int nx1 = 400;
  int nx2 = 400;
  /// Time step; zero selects 0.9 of the largest stable step.
  double dt = 0.0;
  /// Nodes where det[X1|X2] / det at x0 is below this are held at zero.
  double chart_floor = 0.05;
};

/// Largest step keeping the explicit scheme monotone at every interior node:
/// dt (1/h1^2 + |b1|/h1 + |b2|/h2) <= 1.
double fd_stable_dt(const VectorFieldPair& pair, const Vec2<double>& x0, const FDGrid& grid);

struct FDResult {
  double value = 0.0;
  double dt = 0.0;
  int steps = 0;
  /// max |u| on the boundary ring over max |u|, tracked over all steps.
  double boundary_ratio = 0.0;
  bool boundary_warning = false;
};

/// u(T, x0) for u_t = Y0 . grad u + u_11 / 2, u(0) = phi, zero on the
/// boundary. The x2 drift is upwinded; the x1 drift uses central differences
/// where |b1| h1 <= 1 (the stencil stays monotone) and upwind elsewhere.
/// Requires chart form.
/// Throws StabilityError if grid.dt exceeds fd_stable_dt.
FDResult fd_evolve(const VectorFieldPair& pair, const Vec2<double>& x0, const Expr& phi, double T,
                   const FDGrid& grid);

struct FDCoefficient {
  CoefficientFit fit;
  std::vector<double> t;
  std::vector<double> ratio;  // u_pair(t) / u_linear(t)
  bool boundary_warning = false;
};

/// First-order coefficient from the ratio of two solves per t: the pair and
/// its linearization (0, S (x1 - x0_1)) at x0, both started from the bump
/// exp(-((y1-x0_1)^2 / t + (y2-x0_2)^2 / (S^2 t^3)) / (2 sigma^2)) on the box
/// x0 +- (l1 sqrt(t), l2 |S| t^{3/2}) with grid.nx1 x grid.nx2 nodes. The
/// ratio is fitted to 1 + c t without weights. grid bounds and dt are
/// ignored.
FDCoefficient fd_coefficient(const VectorFieldPair& pair, const Vec2<double>& x0,
                             const std::vector<double>& t_grid, const FDGrid& grid,
                             double sigma = 0.1, double l1 = 6.0, double l2 = 8.0);

}  // namespace hypoheat
