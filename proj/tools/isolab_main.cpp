#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "isolab/scenario.hpp"
#include "isolab/serialize.hpp"

namespace {

struct RunOpts {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> tols;
  CLI::Option* seed_opt = nullptr;
};

void attach_run_options(CLI::App* sub, RunOpts& o) {
  sub->add_option("config", o.config, "bundled scenario name or path to a config file")
      ->required();
  sub->add_option("--out", o.out, "artifact directory (overrides the config)");
  o.seed_opt = sub->add_option("--seed", o.seed, "RNG seed (overrides the config)");
  sub->add_option("--tol", o.tols, "override a tolerance, NAME=VALUE (repeatable)");
}

std::string load_config_text(const std::string& arg) {
  try {
    return isolab::bundled_scenario_config(arg);
  } catch (const isolab::ConfigError&) {
    // not a bundled name; treat as a file path
  }
  try {
    return isolab::read_text_file(arg);
  } catch (const std::exception& e) {
    throw isolab::ConfigError("config: cannot read `" + arg + "`: " + e.what());
  }
}

int run_with(const RunOpts& o, const std::string& pipeline_override) {
  isolab::ScenarioConfig cfg = isolab::parse_scenario_config(load_config_text(o.config));
  if (!pipeline_override.empty()) cfg.pipeline = pipeline_override;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed_opt != nullptr && o.seed_opt->count() > 0) {
    cfg.seed = o.seed;
    cfg.has_seed = true;
  }
  for (const std::string& t : o.tols) {
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == t.size())
      throw isolab::ConfigError("config: --tol expects NAME=VALUE, got `" + t + "`");
    const std::string name = t.substr(0, eq);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(t.substr(eq + 1), &used);
      if (used != t.size() - eq - 1) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw isolab::ConfigError("config: --tol `" + name + "` needs a numeric value");
    }
    if (!(value > 0.0))
      throw isolab::ConfigError("config: --tol `" + name + "` must be positive");
    cfg.tolerances[name] = value;
  }

  const int rc = isolab::run_scenario(cfg);

  const std::string out = cfg.out_dir.empty() ? "out/" + cfg.name : cfg.out_dir;
  const nlohmann::json summary =
      nlohmann::json::parse(isolab::read_text_file(out + "/summary.json"));
  for (const auto& row : summary.at("checks")) {
    std::printf("%-32s %s\n", row.at("name").get<std::string>().c_str(),
                row.at("pass").get<bool>() ? "pass" : "FAIL");
  }
  std::printf("%s: %s (artifacts in %s)\n", cfg.name.c_str(), rc == 0 ? "PASS" : "FAIL",
              out.c_str());
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for isoperimetric profiles and concentration splitting"};
  app.require_subcommand(1);

  RunOpts run_o, profile_o, decompose_o, geom_o, limits_o;

  CLI::App* run = app.add_subcommand("run", "run a scenario's full configured pipeline");
  attach_run_options(run, run_o);

  CLI::App* list = app.add_subcommand("list", "list bundled (and custom) scenarios");
  std::string list_dir;
  list->add_option("--dir", list_dir, "directory of custom *.json configs to include");

  CLI::App* profile = app.add_subcommand("profile", "run only the profile stage");
  attach_run_options(profile, profile_o);

  CLI::App* decompose = app.add_subcommand("decompose", "run only the decomposition stage");
  attach_run_options(decompose, decompose_o);

  CLI::App* verify = app.add_subcommand("verify", "run one verification pipeline");
  verify->require_subcommand(1);
  CLI::App* vgeom = verify->add_subcommand("geometry", "bounded-geometry floors");
  attach_run_options(vgeom, geom_o);
  CLI::App* vlimits = verify->add_subcommand("limits", "limit charts, region, convergence");
  attach_run_options(vlimits, limits_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_with(run_o, "");
    if (list->parsed()) {
      for (const isolab::ScenarioInfo& info : isolab::list_scenarios(list_dir))
        std::printf("%-24s %-9s %s\n", info.name.c_str(), info.bundled ? "[bundled]" : "[custom]",
                    info.description.c_str());
      return 0;
    }
    if (profile->parsed()) return run_with(profile_o, "profile");
    if (decompose->parsed()) return run_with(decompose_o, "decompose");
    if (vgeom->parsed()) return run_with(geom_o, "verify-geometry");
    if (vlimits->parsed()) return run_with(limits_o, "verify-limits");
  } catch (const isolab::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
