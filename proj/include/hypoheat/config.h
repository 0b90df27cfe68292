#pragma once

// Run configuration read from JSON. Vector fields are given as expression
// strings; numeric fields may be overridden from the command line.

#include <array>
#include <string>
#include <string_view>
#include <utility>

#include "hypoheat/geometry.h"
#include "hypoheat/oracle.h"

namespace hypoheat {

struct Config {
  std::array<std::string, 2> x0_expr = {"0", "x1"};
  std::array<std::string, 2> x1_expr = {"1", "0"};
  Vec2<double> base_point = Vec2<double>::Zero();
  SimConfig sim;
  FDGrid fd;
  /// Horizon and bump width of the fd benchmark solve.
  double fd_T = 0.25;
  double fd_bump_sigma = 0.15;
  /// Relative bump width of the fd coefficient method.
  double fd_coeff_sigma = 0.1;
  /// Observation times outside this window are not fitted.
  std::pair<double, double> fit_window = {0.05, 0.4};
  std::string output_dir = ".";

  VectorFieldPair pair() const;
  /// Field ranges, expression parsing and hypotheses (a), (b) at the base point.
  void validate() const;
};

/// Throws ConfigError (JSON syntax errors carry the byte offset, unknown or
/// mistyped keys are rejected), ParseError for bad expressions and
/// HypothesisError when the base point fails (a) or (b).
Config parse_config(std::string_view json_text);
Config load_config(const std::string& path);

/// Canonical JSON text of a configuration.
std::string config_json(const Config& config);

}  // namespace hypoheat
