#include "hypoheat/oracle.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/random/normal_distribution.hpp>

#include "hypoheat/errors.h"
#include "hypoheat/parallel.h"

namespace hypoheat {

namespace {

using V = Vec2<double>;

constexpr std::size_t kPathChunk = 4096;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct CompiledField {
  CompiledExpr f1, f2;
  explicit CompiledField(const VectorField& X) : f1(X.f1), f2(X.f2) {}
  bool is_constant() const { return f1.is_constant() && f2.is_constant(); }
  V operator()(const V& x) const { return V(f1(x), f2(x)); }
};

bool frame_nondegenerate(const VectorFieldPair& pair, const V& x0) {
  try {
    structure_constants(pair).check_frame(pair, x0);
  } catch (const SingularMatrixError&) {
    return false;
  }
  return true;
}

// Time steps between consecutive observation times.
std::vector<std::pair<int, double>> step_plan(const SimConfig& cfg) {
  std::vector<std::pair<int, double>> plan;
  double prev = 0.0;
  for (double t : cfg.t_grid) {
    const double span = t - prev;
    const int n = std::max(1, static_cast<int>(std::ceil(span / cfg.dt - 1e-9)));
    plan.emplace_back(n, span / n);
    prev = t;
  }
  return plan;
}

}  // namespace

void SimConfig::validate() const {
  if (n_paths < 1) throw ConfigError("n_paths must be at least 1");
  if (!(dt > 0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (t_grid.empty()) throw ConfigError("t_grid is empty");
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    if (!(t_grid[k] > 0) || !std::isfinite(t_grid[k])) {
      throw ConfigError("t_grid entries must be positive");
    }
    if (k > 0 && !(t_grid[k] > t_grid[k - 1])) {
      throw ConfigError("t_grid must be strictly increasing");
    }
  }
  if (bandwidth && !(*bandwidth > 0)) throw ConfigError("bandwidth must be positive");
  if (!(blowup_radius > 0)) throw ConfigError("blowup_radius must be positive");
  if (!(chart_floor >= 0) || !(chart_floor < 1)) throw ConfigError("chart_floor must be in [0, 1)");
}

VectorField generator_drift(const VectorFieldPair& pair, const V& x0) {
  const Expr div = divergence(pair.X1, canonical_volume(pair, x0));
  const Expr half = make_mul(Expr::constant(0.5), div);
  return {simplify(make_add(pair.X0.f1, make_mul(half, pair.X1.f1))),
          simplify(make_add(pair.X0.f2, make_mul(half, pair.X1.f2)))};
}

VectorField ito_drift(const VectorFieldPair& pair) {
  // (DX1) X1 = X1(X1^k) componentwise.
  const Expr half = Expr::constant(0.5);
  return {simplify(make_add(pair.X0.f1, make_mul(half, pair.X1.apply(pair.X1.f1)))),
          simplify(make_add(pair.X0.f2, make_mul(half, pair.X1.apply(pair.X1.f2))))};
}

VectorField simulation_drift(const VectorFieldPair& pair, const V& x0) {
  if (!frame_nondegenerate(pair, x0)) return ito_drift(pair);
  return ito_drift({generator_drift(pair, x0), pair.X1});
}

SplitMix64::SplitMix64(std::uint64_t seed, std::uint64_t index)
    : state_(mix64(seed ^ mix64(index + 0x632be59bd9b4e019ULL))) {}

SplitMix64::result_type SplitMix64::operator()() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix64(state_);
}

std::vector<EndpointSet> simulate_endpoints(const VectorFieldPair& pair, const V& x0,
                                            const SimConfig& cfg) {
  cfg.validate();
  const CompiledField drift(simulation_drift(pair, x0));
  const CompiledField noise(pair.X1);
  const CompiledExpr frame_det(simplify(structure_constants(pair).frame_det));
  const double det0 = frame_det(x0);
  const bool check_det = !frame_det.is_constant() && frame_nondegenerate(pair, x0);
  const bool const_drift1 = drift.f1.is_constant();
  const bool const_noise = noise.is_constant();
  const V b_const(drift.f1(x0), 0.0);
  const V s_const = noise(x0);
  const auto plan = step_plan(cfg);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<EndpointSet> out(cfg.t_grid.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].t = cfg.t_grid[k];
    out[k].x.assign(cfg.n_paths, V(nan, nan));
  }

  const std::size_t chunks = (cfg.n_paths + kPathChunk - 1) / kPathChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(cfg.n_paths, (c + 1) * kPathChunk);
    for (std::size_t i = c * kPathChunk; i < end; ++i) {
      SplitMix64 rng(cfg.seed, i);
      boost::random::normal_distribution<double> normal;
      V x = x0;
      for (std::size_t k = 0; k < plan.size(); ++k) {
        const auto [n, h] = plan[k];
        const double sqrt_h = std::sqrt(h);
        bool alive = true;
        for (int step = 0; step < n; ++step) {
          const double xi = normal(rng) * sqrt_h;
          const double b1 = const_drift1 ? b_const(0) : drift.f1(x);
          const double b2 = drift.f2(x);
          const V s = const_noise ? s_const : noise(x);
          x(0) += b1 * h + s(0) * xi;
          x(1) += b2 * h + s(1) * xi;
          if (!std::isfinite(x(0)) || !std::isfinite(x(1)) || x.norm() > cfg.blowup_radius) {
            throw SimulationError(i, "path " + std::to_string(i) + " left radius " +
                                         std::to_string(cfg.blowup_radius));
          }
          if (check_det && !(frame_det(x) / det0 >= cfg.chart_floor)) {
            alive = false;
            break;
          }
        }
        if (!alive) break;
        out[k].x[i] = x;
      }
    }
  });
  return out;
}

DensityEstimate estimate_density(const EndpointSet& endpoints, const V& x0,
                                 const VectorFieldPair& pair, std::optional<double> bandwidth) {
  const std::size_t n = endpoints.x.size();
  if (n == 0) throw DomainError("no endpoints");
  if (bandwidth && !(*bandwidth > 0)) throw ConfigError("bandwidth must be positive");

  std::size_t live = 0;
  V mean = V::Zero();
  for (const V& x : endpoints.x) {
    if (!std::isfinite(x(0))) continue;
    ++live;
    mean += x;
  }
  if (live < 2) throw DomainError("fewer than two live endpoints");
  mean /= static_cast<double>(live);
  V var = V::Zero();
  for (const V& x : endpoints.x) {
    if (std::isfinite(x(0))) var += (x - mean).cwiseAbs2();
  }
  var /= static_cast<double>(live - 1);
  if (!(var(0) > 0) || !(var(1) > 0)) throw DomainError("endpoint sample has zero variance");

  const double scale = bandwidth.value_or(1.0) * std::pow(static_cast<double>(live), -1.0 / 6);
  DensityEstimate est;
  est.n_effective = live;
  est.h1 = scale * std::sqrt(var(0));
  est.h2 = scale * std::sqrt(var(1));
  const double norm = 1.0 / (2 * std::numbers::pi * est.h1 * est.h2);
  const double rho0 = evaluate(canonical_volume(pair, x0).rho, x0);

  const std::size_t batches = std::min<std::size_t>(kDensityBatches, n);
  std::vector<double> batch(batches, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * n / batches, hi = (b + 1) * n / batches;
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const V& x = endpoints.x[i];
      if (!std::isfinite(x(0))) continue;
      const double u1 = (x(0) - x0(0)) / est.h1, u2 = (x(1) - x0(1)) / est.h2;
      sum += std::exp(-0.5 * (u1 * u1 + u2 * u2));
    }
    total += sum;
    batch[b] = norm * sum / static_cast<double>(hi - lo) / rho0;
  }
  est.value = norm * total / static_cast<double>(n) / rho0;
  if (batches > 1) {
    double mb = 0.0;
    for (double v : batch) mb += v;
    mb /= batches;
    double ss = 0.0;
    for (double v : batch) ss += (v - mb) * (v - mb);
    est.std_error = std::sqrt(ss / (batches - 1) / batches);
  }
  return est;
}

CoefficientFit fit_coefficient(const std::vector<double>& t,
                               const std::vector<DensityEstimate>& estimates) {
  if (t.size() != estimates.size()) throw DomainError("fit: time and estimate counts differ");
  if (t.size() < 3) throw DomainError("fit needs at least 3 observation times");
  const auto [tmin, tmax] = std::minmax_element(t.begin(), t.end());
  if (!(*tmax - *tmin > 1e-12 * std::abs(*tmax))) {
    throw DomainError("ill-conditioned fit: all observation times are equal");
  }
  const std::size_t m = t.size();
  std::vector<double> r(m), w(m);
  bool weighted = true;
  for (std::size_t i = 0; i < m; ++i) {
    const double factor = 2 * std::numbers::pi * t[i] * t[i] / std::sqrt(12.0);
    r[i] = estimates[i].value * factor;
    const double se = estimates[i].std_error * factor;
    if (!(se > 0)) weighted = false;
    w[i] = se > 0 ? 1 / (se * se) : 0.0;
  }
  if (!weighted) std::fill(w.begin(), w.end(), 1.0);

  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    stt += w[i] * t[i] * t[i];
    sty += w[i] * t[i] * (r[i] - 1);
  }
  CoefficientFit fit;
  fit.c = sty / stt;
  double ss_res = 0.0, sw = 0.0, swr = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = r[i] - 1 - fit.c * t[i];
    ss_res += w[i] * e * e;
    sw += w[i];
    swr += w[i] * r[i];
  }
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < m; ++i) ss_tot += w[i] * (r[i] - swr / sw) * (r[i] - swr / sw);
  fit.std_error = weighted ? 1 / std::sqrt(stt) : std::sqrt(ss_res / (m - 1) / stt);
  fit.r_squared = ss_tot > 0 ? 1 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  return fit;
}

MonteCarloCoefficient montecarlo_coefficient(const VectorFieldPair& pair, const V& x0,
                                             const SimConfig& cfg) {
  cfg.validate();
  MonteCarloCoefficient out;
  out.t = cfg.t_grid;
  for (std::size_t k = 0; k < cfg.t_grid.size(); ++k) {
    SimConfig one = cfg;
    one.t_grid = {cfg.t_grid[k]};
    one.seed = mix64(cfg.seed + mix64(k + 1));
    const auto ends = simulate_endpoints(pair, x0, one);
    out.estimates.push_back(estimate_density(ends[0], x0, pair, cfg.bandwidth));
  }
  out.fit = fit_coefficient(out.t, out.estimates);
  return out;
}

namespace {

struct FDSetup {
  double h1, h2;
  std::vector<double> b1, b2;  // drift at every node, row-major in x1
  std::vector<char> absorbing;
};

FDSetup fd_setup(const VectorFieldPair& pair, const V& x0, const FDGrid& grid) {
  require_chart_form(pair);
  if (grid.nx1 < 5 || grid.nx2 < 5) throw ConfigError("FD grid needs at least 5 nodes per axis");
  if (!(grid.x1_max > grid.x1_min) || !(grid.x2_max > grid.x2_min)) {
    throw ConfigError("FD grid bounds are empty");
  }
  FDSetup s;
  s.h1 = (grid.x1_max - grid.x1_min) / (grid.nx1 - 1);
  s.h2 = (grid.x2_max - grid.x2_min) / (grid.nx2 - 1);
  if (x0(0) < grid.x1_min + 2 * s.h1 || x0(0) > grid.x1_max - 2 * s.h1 ||
      x0(1) < grid.x2_min + 2 * s.h2 || x0(1) > grid.x2_max - 2 * s.h2) {
    throw ConfigError("FD grid does not contain the base point with margin");
  }
  const CompiledField drift(generator_drift(pair, x0));
  const CompiledExpr frame_det(simplify(structure_constants(pair).frame_det));
  const double det0 = frame_det(x0);
  const std::size_t n = static_cast<std::size_t>(grid.nx1) * grid.nx2;
  s.b1.assign(n, 0.0);
  s.b2.assign(n, 0.0);
  s.absorbing.assign(n, 0);
  for (int j = 0; j < grid.nx2; ++j) {
    for (int i = 0; i < grid.nx1; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * grid.nx1 + i;
      const V x(grid.x1_min + i * s.h1, grid.x2_min + j * s.h2);
      if (i == 0 || j == 0 || i == grid.nx1 - 1 || j == grid.nx2 - 1 ||
          !(frame_det(x) / det0 >= grid.chart_floor)) {
        s.absorbing[k] = 1;
        continue;
      }
      const V b = drift(x);
      s.b1[k] = b(0);
      s.b2[k] = b(1);
    }
  }
  return s;
}

double stable_dt(const FDSetup& s, const FDGrid& grid) {
  double worst = 0.0;
  for (int j = 1; j < grid.nx2 - 1; ++j) {
    for (int i = 1; i < grid.nx1 - 1; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * grid.nx1 + i;
      if (s.absorbing[k]) continue;
      worst = std::max(worst, 1 / (s.h1 * s.h1) + std::abs(s.b1[k]) / s.h1 +
                                  std::abs(s.b2[k]) / s.h2);
    }
  }
  if (!std::isfinite(worst)) throw DomainError("drift is not finite on the FD grid");
  return 1 / worst;
}

double bilinear(const std::vector<double>& u, const FDGrid& grid, double h1, double h2,
                const V& x) {
  const double a = (x(0) - grid.x1_min) / h1, b = (x(1) - grid.x2_min) / h2;
  const int i = std::min(static_cast<int>(a), grid.nx1 - 2);
  const int j = std::min(static_cast<int>(b), grid.nx2 - 2);
  const double fa = a - i, fb = b - j;
  auto at = [&](int p, int q) { return u[static_cast<std::size_t>(q) * grid.nx1 + p]; };
  return (1 - fa) * (1 - fb) * at(i, j) + fa * (1 - fb) * at(i + 1, j) +
         (1 - fa) * fb * at(i, j + 1) + fa * fb * at(i + 1, j + 1);
}

}  // namespace

double fd_stable_dt(const VectorFieldPair& pair, const V& x0, const FDGrid& grid) {
  return stable_dt(fd_setup(pair, x0, grid), grid);
}

FDResult fd_evolve(const VectorFieldPair& pair, const V& x0, const Expr& phi, double T,
                   const FDGrid& grid) {
  if (!(T >= 0) || !std::isfinite(T)) throw DomainError("FD horizon must be nonnegative");
  const FDSetup s = fd_setup(pair, x0, grid);
  const double dt_max = stable_dt(s, grid);
  if (grid.dt > dt_max) {
    throw StabilityError("FD step " + std::to_string(grid.dt) + " exceeds the stable bound " +
                         std::to_string(dt_max));
  }
  const int nx1 = grid.nx1, nx2 = grid.nx2;
  const std::size_t n = static_cast<std::size_t>(nx1) * nx2;
  const CompiledExpr f(phi);
  std::vector<double> u(n, 0.0), next(n, 0.0);
  for (int j = 1; j < nx2 - 1; ++j) {
    for (int i = 1; i < nx1 - 1; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * nx1 + i;
      if (!s.absorbing[k]) u[k] = f(grid.x1_min + i * s.h1, grid.x2_min + j * s.h2);
    }
  }

  FDResult res;
  const double target = grid.dt > 0 ? grid.dt : 0.9 * dt_max;
  res.steps = T > 0 ? static_cast<int>(std::ceil(T / target - 1e-12)) : 0;
  res.dt = res.steps > 0 ? T / res.steps : 0.0;
  if (res.steps == 0) {
    res.value = f(x0);
    return res;
  }

  // u' = u + dt (b1+ D1+ u + b1- D1- u + b2+ D2+ u + b2- D2- u + D11 u / 2).
  std::vector<double> ce(n), cw(n), cn(n), cs(n), cc(n);
  const double diff = 0.5 * res.dt / (s.h1 * s.h1);
  for (std::size_t k = 0; k < n; ++k) {
    if (s.absorbing[k]) {
      ce[k] = cw[k] = cn[k] = cs[k] = cc[k] = 0.0;
      continue;
    }
    // Central in x1 while the stencil stays monotone, upwind otherwise.
    const bool central = std::abs(s.b1[k]) * s.h1 <= 1.0;
    const double p1 = central ? 0.5 * s.b1[k] * res.dt / s.h1
                              : std::max(s.b1[k], 0.0) * res.dt / s.h1;
    const double m1 = central ? -0.5 * s.b1[k] * res.dt / s.h1
                              : -std::min(s.b1[k], 0.0) * res.dt / s.h1;
    const double p2 = std::max(s.b2[k], 0.0) * res.dt / s.h2;
    const double m2 = -std::min(s.b2[k], 0.0) * res.dt / s.h2;
    ce[k] = diff + p1;
    cw[k] = diff + m1;
    cn[k] = p2;
    cs[k] = m2;
    cc[k] = 1 - 2 * diff - p1 - m1 - p2 - m2;
  }

  double ring_max = 0.0, all_max = 0.0;
  for (int step = 0; step < res.steps; ++step) {
    double step_max = 0.0, step_ring = 0.0;
    for (int j = 1; j < nx2 - 1; ++j) {
      const std::size_t row = static_cast<std::size_t>(j) * nx1;
      const bool ring_row = j == 1 || j == nx2 - 2;
      for (int i = 1; i < nx1 - 1; ++i) {
        const std::size_t k = row + i;
        const double v = cc[k] * u[k] + ce[k] * u[k + 1] + cw[k] * u[k - 1] +
                         cn[k] * u[k + nx1] + cs[k] * u[k - nx1];
        next[k] = v;
        const double a = std::abs(v);
        step_max = std::max(step_max, a);
        if (ring_row || i == 1 || i == nx1 - 2) step_ring = std::max(step_ring, a);
      }
    }
    std::swap(u, next);
    ring_max = std::max(ring_max, step_ring);
    all_max = std::max(all_max, step_max);
  }
  res.value = bilinear(u, grid, s.h1, s.h2, x0);
  res.boundary_ratio = all_max > 0 ? ring_max / all_max : 0.0;
  res.boundary_warning = res.boundary_ratio > 1e-6;
  return res;
}

FDCoefficient fd_coefficient(const VectorFieldPair& pair, const V& x0,
                             const std::vector<double>& t_grid, const FDGrid& grid, double sigma,
                             double l1, double l2) {
  if (!(sigma > 0) || !(l1 > 0) || !(l2 > 0)) throw ConfigError("FD bump parameters must be positive");
  const double S = chart_taylor_data(pair, x0).S;
  const VectorFieldPair linear{{Expr::constant(0.0),
                                make_mul(Expr::constant(S),
                                         make_sub(parse("x1"), Expr::constant(x0(0))))},
                               pair.X1};
  FDCoefficient out;
  out.t = t_grid;
  std::vector<DensityEstimate> est;
  for (double t : t_grid) {
    if (!(t > 0)) throw ConfigError("FD coefficient times must be positive");
    const double w1 = std::sqrt(t), w2 = std::abs(S) * t * std::sqrt(t);
    FDGrid g = grid;
    g.x1_min = x0(0) - l1 * w1;
    g.x1_max = x0(0) + l1 * w1;
    g.x2_min = x0(1) - l2 * w2;
    g.x2_max = x0(1) + l2 * w2;
    g.dt = 0.0;
    const Expr u1 = make_div(make_sub(parse("x1"), Expr::constant(x0(0))),
                             Expr::constant(sigma * w1));
    const Expr u2 = make_div(make_sub(parse("x2"), Expr::constant(x0(1))),
                             Expr::constant(sigma * w2));
    const Expr bump = make_unary(
        UnaryFn::kExp, make_mul(Expr::constant(-0.5),
                                make_add(make_mul(u1, u1), make_mul(u2, u2))));
    const FDResult a = fd_evolve(pair, x0, bump, t, g);
    const FDResult b = fd_evolve(linear, x0, bump, t, g);
    out.boundary_warning = out.boundary_warning || a.boundary_warning || b.boundary_warning;
    out.ratio.push_back(a.value / b.value);
    est.push_back({out.ratio.back() * std::sqrt(12.0) / (2 * std::numbers::pi * t * t), 0.0,
                   0, 0.0, 0.0});
  }
  out.fit = fit_coefficient(t_grid, est);
  return out;
}

}  // namespace hypoheat
