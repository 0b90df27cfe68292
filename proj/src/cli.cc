#include "hypoheat/cli.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>

#include <CLI11.hpp>
#include <Eigen/Cholesky>
#include <json.hpp>

#include "hypoheat/config.h"
#include "hypoheat/duhamel.h"
#include "hypoheat/errors.h"
#include "hypoheat/gauss_algebra.h"
#include "hypoheat/gaussian.h"
#include "hypoheat/geometry.h"
#include "hypoheat/oracle.h"
#include "hypoheat/random_pairs.h"

namespace hypoheat {

namespace {

using json = nlohmann::ordered_json;
using V = Vec2<double>;
using Op = LQOperator<double>;

struct Check {
  std::string name;
  bool pass = false;
  double residual = 0.0;
  double tolerance = 0.0;
};

class Checks {
 public:
  void add(const std::string& name, double residual, double tolerance) {
    items_.push_back({name, std::isfinite(residual) && residual <= tolerance, residual, tolerance});
  }
  bool all_pass() const {
    for (const Check& c : items_) {
      if (!c.pass) return false;
    }
    return true;
  }
  json to_json() const {
    json out = json::array();
    for (const Check& c : items_) {
      out.push_back({{"name", c.name}, {"pass", c.pass}, {"residual", c.residual},
                     {"tolerance", c.tolerance}});
    }
    return out;
  }
  const std::vector<Check>& items() const { return items_; }

 private:
  std::vector<Check> items_;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_paths;
  std::optional<double> t;
  std::optional<std::string> output_dir;
  std::optional<double> S;
  std::vector<double> x = {0, 0};
  std::vector<double> y = {0, 0};
  std::string method;
  int count = 100;
  double expected_shift = 0.0;
  bool endpoints = false;
  bool timing = false;
};

class Session {
 public:
  Session(const Options& opt, bool need_config) : opt_(opt) {
    if (!opt.config_path.empty()) {
      config_ = load_config(opt.config_path);
    } else if (need_config) {
      throw ConfigError("this subcommand needs --config <path>");
    }
    if (config_) {
      if (opt.seed) config_->sim.seed = *opt.seed;
      if (opt.n_paths) config_->sim.n_paths = *opt.n_paths;
      if (opt.output_dir) config_->output_dir = *opt.output_dir;
      config_->sim.validate();
    }
  }

  const Config& config() const { return *config_; }
  VectorFieldPair pair() const { return config_->pair(); }
  const V& x0() const { return config_->base_point; }
  std::uint64_t seed() const { return opt_.seed.value_or(config_ ? config_->sim.seed : 1); }

  bool chart_form() const {
    if (!config_) return false;
    try {
      require_chart_form(pair());
    } catch (const HypothesisError&) {
      return false;
    }
    return true;
  }

  /// Slope of the linear model: --S, else d1 alpha2 at the base point, else 1.
  double slope() const {
    if (opt_.S) return *opt_.S;
    if (chart_form()) return chart_taylor_data(pair(), x0()).S;
    return 1.0;
  }

  std::filesystem::path output_dir() const {
    std::filesystem::path dir = opt_.output_dir.value_or(config_ ? config_->output_dir : ".");
    std::filesystem::create_directories(dir);
    return dir;
  }

  Checks checks;
  json timing = json::object();

  template <typename F>
  json timed(const std::string& name, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    json out = f();
    timing[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

 private:
  Options opt_;
  std::optional<Config> config_;
};

json vec_json(const V& v) { return json::array({v(0), v(1)}); }

json kernel_section(Session& s, const std::vector<double>& times) {
  const double S = s.slope();
  const Op op = Op::kolmogorov(S);
  json rows = json::array();
  for (double t : times) {
    const double value = kernel_eval(op, t, V(0, 0), V(0, 0));
    const double expected = std::sqrt(12.0) / (2 * std::numbers::pi * t * t * std::abs(S));
    const double rel = std::abs(value / expected - 1);
    s.checks.add("kernel.diagonal t=" + json(t).dump(), rel, 1e-12);
    rows.push_back({{"t", t}, {"value", value}, {"expected", expected}, {"rel_error", rel}});
  }
  return {{"S", S}, {"diagonal", rows}};
}

json lemma31_section(Session& s) {
  const double S = s.slope();
  const Op op = Op::kolmogorov(S);
  std::mt19937_64 gen(s.seed());
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> n01;
  double worst = 0.0, worst_asym = 0.0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    const double sv = 0.9 * u(gen);
    const double r = (1 - sv) * (0.02 + 0.96 * u(gen));
    const V z(0.5 * n01(gen), 0.3 * n01(gen));
    const ChainSplit<double> split = lemma31_split<double>(op, sv, r, z);
    const Eigen::LLT<Mat2<double>> llt(split.w_gaussian.cov());
    const V w = split.w_gaussian.mean() + 1.5 * (Mat2<double>(llt.matrixL()) * V(n01(gen), n01(gen)));
    const double lhs = kernel_eval(op, r, z, w) * kernel_eval(op, 1 - sv - r, w, V(0, 0));
    const double rhs = std::exp(split.log_z_factor) * split.w_gaussian.density(w);
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
    worst_asym = std::max(worst_asym, split.asymmetry);
  }
  s.checks.add("lemma31.pointwise", worst, 1e-11);
  s.checks.add("lemma31.symmetry", worst_asym, 1e-10);
  return {{"S", S}, {"trials", trials}, {"max_rel_error", worst}, {"max_asymmetry", worst_asym}};
}

struct TableRow {
  MonomialOp lhs;
  std::optional<MonomialOp> rhs;
  double expected;
};

json convolutions_section(Session& s, double shift, bool write_csv) {
  const double S = s.slope();
  const Op op = Op::kolmogorov(S);
  const MonomialOp d1{1, 0, 0, 1}, x1d1{1, 1, 0, 1}, x2d2{1, 0, 1, 2};
  const MonomialOp x1sq_d2{1, 2, 0, 2}, x1cube_d2{1, 3, 0, 2};
  const double k = 3 / (14 * S);
  const std::vector<TableRow> table = {
      {d1, std::nullopt, 0.0},        {x1sq_d2, std::nullopt, 0.0},
      {x1d1, std::nullopt, -0.5},     {x2d2, std::nullopt, -0.5},
      {x1cube_d2, std::nullopt, -k},  {d1, d1, -0.5},
      {x1sq_d2, d1, k},               {d1, x1sq_d2, -k},
      {x1sq_d2, x1sq_d2, 9 / (70 * S * S)},
  };
  json rows = json::array();
  std::ofstream csv;
  if (write_csv) {
    csv.open(s.output_dir() / "convolutions.csv");
    csv.precision(17);
    csv << "lhs_op,rhs_op,expected,computed,abs_error\n";
  }
  for (const TableRow& row : table) {
    const ConvolutionResult c = row.rhs ? conv2(op, row.lhs, *row.rhs) : conv1(op, row.lhs);
    const double expected = row.expected + shift;
    const double err = std::abs(c.normalized - expected);
    const std::string lhs = to_string(row.lhs), rhs = row.rhs ? to_string(*row.rhs) : "";
    s.checks.add("convolution " + lhs + (row.rhs ? " , " + rhs : ""), err, 1e-6);
    rows.push_back({{"lhs_op", lhs}, {"rhs_op", rhs}, {"expected", expected},
                    {"computed", c.normalized}, {"abs_error", err}, {"quad_error", c.error}});
    if (write_csv) {
      csv << '"' << lhs << "\",\"" << rhs << "\"," << expected << ',' << c.normalized << ','
          << err << '\n';
    }
  }
  return {{"S", S}, {"rows", rows}};
}

json identity_section(Session& s, int count) {
  std::mt19937 gen(static_cast<std::mt19937::result_type>(s.seed()));
  double worst = 0.0;
  int compared = 0;
  auto compare = [&](const VectorFieldPair& pair, const V& x) {
    const double g = coefficient_geometric(pair, x);
    const double c = coefficient_coordinate(pair, x);
    worst = std::max(worst, std::abs(g - c) / std::max(1.0, std::abs(c)));
    ++compared;
  };
  if (s.chart_form()) compare(s.pair(), s.x0());
  for (int k = 0; k < count; ++k) compare(random_chart_pair(gen), V(0, 0));
  s.checks.add("identity.geometric_vs_coordinate", worst, 1e-10);
  return {{"pairs", compared}, {"max_rel_difference", worst}};
}

json invariants_section(Session& s) {
  const VectorFieldPair pair = s.pair();
  const GeometricTerms g = geometric_terms(pair, s.x0());
  const R22Form r = r22_form(pair, s.x0());
  const HypothesisCheck h = check_hypotheses(pair, s.x0());
  const double rho = evaluate(canonical_volume(pair, s.x0()).rho, s.x0());
  return {{"K1", g.K1},
          {"K2", g.K2},
          {"div", g.div},
          {"beta", g.beta},
          {"rho", rho},
          {"coefficient", g.coefficient},
          {"r22", {{"h1_sq", r.h1_sq}, {"h1", r.h1}, {"h2", r.h2}, {"constant", r.constant}}},
          {"hypotheses",
           {{"bracket_det", h.bracket_det}, {"parallel_det", h.parallel_det}}}};
}

std::vector<double> fit_times(const Config& c) {
  std::vector<double> t;
  for (double v : c.sim.t_grid) {
    if (v >= c.fit_window.first && v <= c.fit_window.second) t.push_back(v);
  }
  if (t.size() < 3) {
    throw ConfigError("fewer than 3 observation times of sim.t_grid lie in fit_window");
  }
  return t;
}

// Statistical agreement: within 30% of the prediction or 3 standard errors.
void add_statistical_check(Session& s, const std::string& name, double c, double se, double pred) {
  s.checks.add(name, std::abs(c - pred), std::max(0.3 * std::abs(pred), 3 * se));
}

json coefficient_method(Session& s, const std::string& method) {
  const VectorFieldPair pair = s.pair();
  const V& x0 = s.x0();
  if (method == "geometric") {
    return {{"method", method}, {"value", coefficient_geometric(pair, x0)}};
  }
  if (method == "coordinate") {
    const double c = coefficient_coordinate(pair, x0);
    const double g = coefficient_geometric(pair, x0);
    s.checks.add("coefficient.coordinate_vs_geometric", std::abs(c - g) / std::max(1.0, std::abs(g)),
                 1e-10);
    return {{"method", method}, {"value", c}};
  }
  if (method == "duhamel-numeric") {
    const TaylorData taylor = chart_taylor_data(pair, x0);
    const NumericCoefficient n =
        second_order_coefficient_numeric(Op::kolmogorov(taylor.S), build_perturbation(taylor));
    const double closed = second_order_coefficient(taylor);
    s.checks.add("coefficient.duhamel_vs_closed_form", std::abs(n.value - closed), 1e-6);
    return {{"method", method}, {"value", n.value}, {"error", n.error},
            {"first_order", n.first_order}};
  }
  const double pred = coefficient_geometric(pair, x0);
  if (method == "montecarlo") {
    SimConfig cfg = s.config().sim;
    cfg.t_grid = fit_times(s.config());
    const MonteCarloCoefficient m = montecarlo_coefficient(pair, x0, cfg);
    add_statistical_check(s, "coefficient.montecarlo", m.fit.c, m.fit.std_error, pred);
    json points = json::array();
    for (std::size_t k = 0; k < m.t.size(); ++k) {
      const DensityEstimate& d = m.estimates[k];
      points.push_back({{"t", m.t[k]}, {"density", d.value}, {"stderr", d.std_error},
                        {"n_effective", d.n_effective}, {"h1", d.h1}, {"h2", d.h2}});
    }
    return {{"method", method}, {"value", m.fit.c}, {"stderr", m.fit.std_error},
            {"r_squared", m.fit.r_squared}, {"prediction", pred}, {"points", points}};
  }
  if (method == "fd") {
    const FDCoefficient f =
        fd_coefficient(pair, x0, fit_times(s.config()), s.config().fd, s.config().fd_coeff_sigma);
    add_statistical_check(s, "coefficient.fd", f.fit.c, f.fit.std_error, pred);
    json points = json::array();
    for (std::size_t k = 0; k < f.t.size(); ++k) {
      points.push_back({{"t", f.t[k]}, {"ratio", f.ratio[k]}});
    }
    return {{"method", method}, {"value", f.fit.c}, {"stderr", f.fit.std_error},
            {"r_squared", f.fit.r_squared}, {"prediction", pred},
            {"boundary_warning", f.boundary_warning}, {"points", points}};
  }
  throw ConfigError("unknown coefficient method '" + method + "'");
}

// fd_evolve on the linear model at the base point against its exact Gaussian
// convolution, at the configured grid and at half resolution.
json fd_benchmark_section(Session& s) {
  const Config& c = s.config();
  const double S = s.slope();
  const V& x0 = s.x0();
  const VectorFieldPair linear{
      {Expr::constant(0.0), make_mul(Expr::constant(S), make_sub(parse("x1"), Expr::constant(x0(0))))},
      {Expr::constant(1.0), Expr::constant(0.0)}};
  const double sigma = c.fd_bump_sigma, T = c.fd_T;
  const Expr dx1 = make_sub(parse("x1"), Expr::constant(x0(0)));
  const Expr dx2 = make_sub(parse("x2"), Expr::constant(x0(1)));
  const Expr phi = make_unary(
      UnaryFn::kExp, make_mul(Expr::constant(-0.5 / (sigma * sigma)),
                              make_add(make_mul(dx1, dx1), make_mul(dx2, dx2))));
  const Mat2<double> C = gramian_G(Op::kolmogorov(S), T) + sigma * sigma * Mat2<double>::Identity();
  const double exact = sigma * sigma / std::sqrt(C.determinant());
  const FDResult fine = fd_evolve(linear, x0, phi, T, c.fd);
  FDGrid half = c.fd;
  half.nx1 = (c.fd.nx1 + 1) / 2;
  half.nx2 = (c.fd.nx2 + 1) / 2;
  half.dt = 0.0;
  const FDResult coarse = fd_evolve(linear, x0, phi, T, half);
  const double rel = std::abs(fine.value / exact - 1);
  const double ratio = std::abs(coarse.value - exact) / std::abs(fine.value - exact);
  s.checks.add("fd.benchmark", rel, 0.02);
  s.checks.add("fd.convergence_ratio", std::abs(ratio - 2.0), 0.3);
  return {{"T", T}, {"sigma", sigma}, {"exact", exact}, {"value", fine.value},
          {"rel_error", rel}, {"coarse_value", coarse.value}, {"error_ratio", ratio},
          {"steps", fine.steps}, {"dt", fine.dt}, {"boundary_ratio", fine.boundary_ratio},
          {"boundary_warning", fine.boundary_warning}};
}

json simulate_section(Session& s, std::optional<double> t, bool write_endpoints) {
  SimConfig cfg = s.config().sim;
  if (t) cfg.t_grid = {*t};
  const VectorFieldPair pair = s.pair();
  const auto ends = simulate_endpoints(pair, s.x0(), cfg);
  json rows = json::array();
  for (const EndpointSet& e : ends) {
    const DensityEstimate d = estimate_density(e, s.x0(), pair, cfg.bandwidth);
    rows.push_back({{"t", e.t}, {"density", d.value}, {"stderr", d.std_error},
                    {"n_effective", d.n_effective}, {"h1", d.h1}, {"h2", d.h2},
                    {"asymptotic", full_asymptotics(pair, s.x0(), e.t)}});
  }
  if (write_endpoints) {
    std::ofstream csv(s.output_dir() / "endpoints.csv");
    csv.precision(17);
    csv << "path_index,t,x1,x2\n";
    for (const EndpointSet& e : ends) {
      for (std::size_t i = 0; i < e.x.size(); ++i) {
        csv << i << ',' << e.t << ',' << e.x[i](0) << ',' << e.x[i](1) << '\n';
      }
    }
  }
  return {{"n_paths", cfg.n_paths}, {"dt", cfg.dt}, {"seed", cfg.seed},
          {"bandwidth", cfg.bandwidth ? json(*cfg.bandwidth) : json("auto")}, {"estimates", rows}};
}

json report(Session& s) {
  json out;
  out["tool"] = {{"name", "hypoheat"}, {"version", kToolVersion}};
  out["config"] = json::parse(config_json(s.config()));
  json sections;
  sections["kernel"] = s.timed("kernel", [&] { return kernel_section(s, {0.25, 0.5, 1.0, 2.0}); });
  sections["lemma31"] = s.timed("lemma31", [&] { return lemma31_section(s); });
  sections["convolutions"] =
      s.timed("convolutions", [&] { return convolutions_section(s, 0.0, true); });
  sections["identity"] = s.timed("identity", [&] { return identity_section(s, 100); });
  sections["invariants"] = s.timed("invariants", [&] { return invariants_section(s); });
  json coeffs;
  std::vector<std::string> methods = {"geometric"};
  if (s.chart_form()) {
    for (const char* m : {"coordinate", "duhamel-numeric", "montecarlo", "fd"}) methods.push_back(m);
  } else {
    methods.push_back("montecarlo");
  }
  for (const std::string& m : methods) {
    coeffs[m] = s.timed("coeff." + m, [&] { return coefficient_method(s, m); });
  }
  sections["coefficients"] = coeffs;
  if (s.chart_form()) {
    sections["fd_benchmark"] = s.timed("fd_benchmark", [&] { return fd_benchmark_section(s); });
  }
  out["results"] = sections;
  out["checks"] = s.checks.to_json();
  out["all_pass"] = s.checks.all_pass();
  return out;
}

void print_checks(const Checks& checks, std::ostream& out) {
  for (const Check& c : checks.items()) {
    out << (c.pass ? "PASS " : "FAIL ") << c.name << "  residual=" << c.residual
        << "  tol=" << c.tolerance << '\n';
  }
}

int dispatch(CLI::App& app, const Options& opt, std::ostream& out) {
  auto sub = [&](const char* a, const char* b = nullptr) {
    CLI::App* s = app.get_subcommand(a);
    if (!s->parsed()) return false;
    return b == nullptr || s->get_subcommand(b)->parsed();
  };
  json result;
  std::optional<Session> session;
  if (sub("kernel", "eval")) {
    session.emplace(opt, false);
    if (!opt.t) throw ConfigError("kernel eval needs --t");
    const double S = session->slope();
    const V x(opt.x[0], opt.x[1]), y(opt.y[0], opt.y[1]);
    result = {{"S", S}, {"t", *opt.t}, {"x", vec_json(x)}, {"y", vec_json(y)},
              {"value", kernel_eval(Op::kolmogorov(S), *opt.t, x, y)}};
  } else if (sub("verify", "lemma31")) {
    session.emplace(opt, false);
    result = lemma31_section(*session);
  } else if (sub("verify", "convolutions")) {
    session.emplace(opt, false);
    result = convolutions_section(*session, opt.expected_shift, true);
  } else if (sub("verify", "identity")) {
    session.emplace(opt, false);
    result = identity_section(*session, opt.count);
  } else if (sub("invariants")) {
    session.emplace(opt, true);
    result = invariants_section(*session);
  } else if (sub("coeff")) {
    session.emplace(opt, true);
    result = coefficient_method(*session, opt.method);
  } else if (sub("simulate")) {
    session.emplace(opt, true);
    result = simulate_section(*session, opt.t, opt.endpoints);
  } else if (sub("report")) {
    session.emplace(opt, true);
    result = report(*session);
    if (opt.timing) result["timing"] = session->timing;
    const auto path = session->output_dir() / "report.json";
    std::ofstream(path) << result.dump(2) << '\n';
    print_checks(session->checks, out);
    out << "report written to " << path.string() << '\n';
    return session->checks.all_pass() ? kExitOk : kExitCheckFailed;
  }
  if (!session->checks.items().empty()) result["checks"] = session->checks.to_json();
  out << result.dump(2) << '\n';
  return session->checks.all_pass() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Small-time heat-kernel expansion for 2D hypoelliptic operators", "hypoheat"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config_path, "JSON configuration file");
  app.add_option("--seed", opt.seed, "Override sim.seed");
  app.add_option("--n-paths", opt.n_paths, "Override sim.n_paths");
  app.add_option("--t", opt.t, "Time for kernel eval / simulate");
  app.add_option("--output-dir", opt.output_dir, "Override output_dir");
  app.add_option("--S", opt.S, "Slope of the linear model (default from the config)");

  CLI::App* kernel = app.add_subcommand("kernel", "Exact Gaussian kernel");
  kernel->require_subcommand(1);
  CLI::App* keval = kernel->add_subcommand("eval", "q0(t, x, y)");
  keval->add_option("--x", opt.x)->expected(2);
  keval->add_option("--y", opt.y)->expected(2);

  CLI::App* verify = app.add_subcommand("verify", "Exact identity checks");
  verify->require_subcommand(1);
  verify->add_subcommand("lemma31", "Chain-split pointwise identity");
  CLI::App* conv = verify->add_subcommand("convolutions", "Convolution table");
  conv->add_option("--expected-shift", opt.expected_shift,
                   "Add this to every expected value (exercises the failure path)");
  CLI::App* ident = verify->add_subcommand("identity", "Geometric vs coordinate coefficient");
  ident->add_option("--count", opt.count, "Random pairs")->check(CLI::NonNegativeNumber);

  app.add_subcommand("invariants", "K1, K2, div, beta, R22 at the base point");
  CLI::App* coeff = app.add_subcommand("coeff", "First-order coefficient");
  coeff->add_option("--method", opt.method)
      ->required()
      ->check(CLI::IsMember({"coordinate", "geometric", "duhamel-numeric", "montecarlo", "fd"}));
  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo endpoints and diagonal densities");
  sim->add_flag("--endpoints", opt.endpoints, "Write endpoints.csv");
  CLI::App* rep = app.add_subcommand("report", "Run every check and write report.json");
  rep->add_flag("--timing", opt.timing, "Include wall-clock timings");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    return dispatch(app, opt, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "expression error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const HypothesisError& e) {
    err << "hypothesis (" << e.condition() << ") failed: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace hypoheat
