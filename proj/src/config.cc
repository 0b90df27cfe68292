#include "hypoheat/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hypoheat/errors.h"

namespace hypoheat {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "' in " + where + ": " + e.what());
  }
}

std::uint64_t get_unsigned(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_number_unsigned()) {
    throw ConfigError("'" + key + "' in " + where + " must be a nonnegative integer");
  }
  return obj.at(key).get<std::uint64_t>();
}

const json& object_at(const json& obj, const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_object()) throw ConfigError("'" + key + "' must be an object");
  return v;
}

std::array<std::string, 2> expr_pair(const json& obj, const std::string& key) {
  const auto v = get<std::vector<std::string>>(obj, key, "config");
  if (v.size() != 2) throw ConfigError("'" + key + "' must hold two expression strings");
  return {v[0], v[1]};
}

std::optional<double> bandwidth_value(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() != "auto") throw ConfigError("bandwidth must be a number or \"auto\"");
    return std::nullopt;
  }
  if (!v.is_number()) throw ConfigError("bandwidth must be a number or \"auto\"");
  return v.get<double>();
}

void read_sim(const json& s, SimConfig& sim) {
  reject_unknown(s, {"n_paths", "dt", "t_grid", "bandwidth", "seed", "blowup_radius", "chart_floor"},
                 "sim");
  if (s.contains("n_paths")) sim.n_paths = get_unsigned(s, "n_paths", "sim");
  if (s.contains("dt")) sim.dt = get<double>(s, "dt", "sim");
  if (s.contains("t_grid")) sim.t_grid = get<std::vector<double>>(s, "t_grid", "sim");
  if (s.contains("bandwidth")) sim.bandwidth = bandwidth_value(s.at("bandwidth"));
  if (s.contains("seed")) sim.seed = get_unsigned(s, "seed", "sim");
  if (s.contains("blowup_radius")) sim.blowup_radius = get<double>(s, "blowup_radius", "sim");
  if (s.contains("chart_floor")) sim.chart_floor = get<double>(s, "chart_floor", "sim");
}

void read_fd(const json& f, Config& c) {
  reject_unknown(f, {"bounds", "nx1", "nx2", "dt", "chart_floor", "T", "bump_sigma", "coeff_sigma"},
                 "fd");
  if (f.contains("bounds")) {
    const auto b = get<std::vector<double>>(f, "bounds", "fd");
    if (b.size() != 4) throw ConfigError("fd.bounds must be [x1_min, x1_max, x2_min, x2_max]");
    c.fd.x1_min = b[0];
    c.fd.x1_max = b[1];
    c.fd.x2_min = b[2];
    c.fd.x2_max = b[3];
  }
  if (f.contains("nx1")) c.fd.nx1 = static_cast<int>(get_unsigned(f, "nx1", "fd"));
  if (f.contains("nx2")) c.fd.nx2 = static_cast<int>(get_unsigned(f, "nx2", "fd"));
  if (f.contains("dt")) {
    const json& v = f.at("dt");
    if (v.is_string() && v.get<std::string>() == "auto") {
      c.fd.dt = 0.0;
    } else {
      c.fd.dt = get<double>(f, "dt", "fd");
    }
  }
  if (f.contains("chart_floor")) c.fd.chart_floor = get<double>(f, "chart_floor", "fd");
  if (f.contains("T")) c.fd_T = get<double>(f, "T", "fd");
  if (f.contains("bump_sigma")) c.fd_bump_sigma = get<double>(f, "bump_sigma", "fd");
  if (f.contains("coeff_sigma")) c.fd_coeff_sigma = get<double>(f, "coeff_sigma", "fd");
}

}  // namespace

VectorFieldPair Config::pair() const {
  return {VectorField::parse(x0_expr[0], x0_expr[1]), VectorField::parse(x1_expr[0], x1_expr[1])};
}

void Config::validate() const {
  sim.validate();
  if (!(fd.nx1 >= 5) || !(fd.nx2 >= 5)) throw ConfigError("fd.nx1 and fd.nx2 must be at least 5");
  if (!(fd.x1_max > fd.x1_min) || !(fd.x2_max > fd.x2_min)) throw ConfigError("fd.bounds are empty");
  if (!(fd.dt >= 0)) throw ConfigError("fd.dt must be nonnegative");
  if (!(fd_T >= 0)) throw ConfigError("fd.T must be nonnegative");
  if (!(fd_bump_sigma > 0) || !(fd_coeff_sigma > 0)) throw ConfigError("fd bump widths must be positive");
  if (!(fit_window.first >= 0) || !(fit_window.second > fit_window.first)) {
    throw ConfigError("fit_window must be [lo, hi] with 0 <= lo < hi");
  }
  if (!base_point.allFinite()) throw ConfigError("base_point must be finite");
  require_hypotheses(pair(), base_point);
}

Config parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j, {"x0_expr", "x1_expr", "base_point", "sim", "fd", "fit_window", "output_dir"},
                 "config");
  Config c;
  if (!j.contains("x0_expr") || !j.contains("x1_expr")) {
    throw ConfigError("config needs x0_expr and x1_expr");
  }
  c.x0_expr = expr_pair(j, "x0_expr");
  c.x1_expr = expr_pair(j, "x1_expr");
  if (j.contains("base_point")) {
    const auto b = get<std::vector<double>>(j, "base_point", "config");
    if (b.size() != 2) throw ConfigError("base_point must have two entries");
    c.base_point = Vec2<double>(b[0], b[1]);
  }
  if (j.contains("sim")) read_sim(object_at(j, "sim"), c.sim);
  if (j.contains("fd")) read_fd(object_at(j, "fd"), c);
  if (j.contains("fit_window")) {
    const auto w = get<std::vector<double>>(j, "fit_window", "config");
    if (w.size() != 2) throw ConfigError("fit_window must have two entries");
    c.fit_window = {w[0], w[1]};
  }
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "output_dir", "config");
  c.validate();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_json(const Config& c) {
  json j;
  j["x0_expr"] = c.x0_expr;
  j["x1_expr"] = c.x1_expr;
  j["base_point"] = {c.base_point(0), c.base_point(1)};
  json sim;
  sim["n_paths"] = c.sim.n_paths;
  sim["dt"] = c.sim.dt;
  sim["t_grid"] = c.sim.t_grid;
  sim["bandwidth"] = c.sim.bandwidth ? json(*c.sim.bandwidth) : json("auto");
  sim["seed"] = c.sim.seed;
  sim["blowup_radius"] = c.sim.blowup_radius;
  sim["chart_floor"] = c.sim.chart_floor;
  j["sim"] = sim;
  json fd;
  fd["bounds"] = {c.fd.x1_min, c.fd.x1_max, c.fd.x2_min, c.fd.x2_max};
  fd["nx1"] = c.fd.nx1;
  fd["nx2"] = c.fd.nx2;
  fd["dt"] = c.fd.dt > 0 ? json(c.fd.dt) : json("auto");
  fd["chart_floor"] = c.fd.chart_floor;
  fd["T"] = c.fd_T;
  fd["bump_sigma"] = c.fd_bump_sigma;
  fd["coeff_sigma"] = c.fd_coeff_sigma;
  j["fd"] = fd;
  j["fit_window"] = {c.fit_window.first, c.fit_window.second};
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

}  // namespace hypoheat
