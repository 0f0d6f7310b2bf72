#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "isolab/concentration.hpp"
#include "isolab/manifold.hpp"
#include "isolab/perimeter.hpp"

namespace isolab {

// Malformed or contradictory run configuration. The message names the
// offending field and, when the field occurs in the config text, the line
// it sits on.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ScenarioConfig {
  std::string name;
  std::string description;
  std::string pipeline;  // profile | decompose | verify-geometry | verify-limits | all
  std::string stencil = "cut4";
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::string out_dir;

  // base manifold (profile / geometry pipelines)
  bool has_manifold = false;
  int width = 0;
  int height = 0;
  double h = 1.0;
  BoundaryMode boundary = BoundaryMode::open;
  CapSpec caps;

  // sequence pipelines; generators size their own grids
  std::string generator;
  int length = 0;

  std::vector<double> profile_volumes;
  std::vector<double> union_volumes;  // non-empty -> union-profile stage
  std::map<std::string, double> tolerances;
  double v_star = 0.0;  // piece-capacity floor; sharpness measures its own

  // geometry floors (curvature floor may be negative, so not a tolerance)
  bool has_geometry = false;
  double geometry_k = -1.0;
  double geometry_v0 = 0.0;

  double tol(const std::string& key, double fallback) const {
    auto it = tolerances.find(key);
    return it == tolerances.end() ? fallback : it->second;
  }
};

// Parses and validates a structured-text config. Diagnostics name the field
// and its line in the text.
ScenarioConfig parse_scenario_config(const std::string& text);

struct ScenarioInfo {
  std::string name;
  std::string description;
  bool bundled = false;
};

// Deterministic input family behind a bundled scenario; `generator` must be
// one of the bundled generator names. Layouts keep active cells at least
// twice the largest working radius clear of the open walls.
SetSequence bundled_sequence(const std::string& generator, int length,
                             const PerimeterStencil& stencil);

// Lone side x side rider block (corner at (60,60)) on the standard unit cap
// two vertices in from the corner: the per-piece capacity yardstick.
SetSequence capacity_rider_sequence(int side, int length, const PerimeterStencil& stencil);

// A 4x4 and a 3x3 rider on two standard caps far apart; decomposes into two
// pieces and exercises the capacity bound strictly between its breakpoints.
SetSequence capacity_rider_pair_sequence(int length, const PerimeterStencil& stencil);

// Bundled catalog, stable order.
std::vector<ScenarioInfo> bundled_scenarios();
// Config text of a bundled scenario; throws ConfigError on an unknown name.
std::string bundled_scenario_config(const std::string& name);
// Bundled catalog plus any *.json configs found under custom_dir that parse.
std::vector<ScenarioInfo> list_scenarios(const std::string& custom_dir = "");

// Runs the configured pipeline and writes the artifact tree under
// cfg.out_dir (created if missing). Returns 0 when every check passes and
// 1 otherwise; summary.json names each check with its report file.
// Identical config and seed reproduce byte-identical artifacts.
int run_scenario(const ScenarioConfig& cfg);

}  // namespace isolab
