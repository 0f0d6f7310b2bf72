#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <isolab/manifold.hpp>
#include <isolab/perimeter.hpp>
#include <isolab/scenario.hpp>
#include <isolab/serialize.hpp>

using namespace isolab;
using nlohmann::json;

namespace {

std::string parse_error(const std::string& text) {
  try {
    parse_scenario_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool error_mentions(const std::string& text, const std::string& needle) {
  const std::string msg = parse_error(text);
  const bool hit = msg.find(needle) != std::string::npos;
  if (!hit) INFO("config error was: ", msg);
  return hit;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

}  // namespace

TEST_CASE("a minimal config parses with documented defaults") {
  const auto cfg = parse_scenario_config(
      R"({"name":"t","pipeline":"decompose","sequence":{"generator":"static-block"}})");
  CHECK(cfg.name == "t");
  CHECK(cfg.pipeline == "decompose");
  CHECK(cfg.stencil == "cut4");
  CHECK(cfg.generator == "static-block");
  CHECK(cfg.length == 8);
  CHECK_FALSE(cfg.has_seed);
  CHECK_FALSE(cfg.has_manifold);
  CHECK(cfg.out_dir.empty());
  CHECK(cfg.tolerances.empty());
  CHECK(cfg.tol("limit_tol", 1e-9) == 1e-9);
}

TEST_CASE("a full config lands every field") {
  const auto cfg = parse_scenario_config(R"({
    "name": "full-run_1.x",
    "description": "kitchen sink",
    "pipeline": "all",
    "stencil": "crofton16",
    "seed": 42,
    "out": "artifacts/full",
    "manifold": {"width": 32, "height": 24, "h": 0.5, "boundary": "periodic",
                 "caps": [{"x": 10, "y": 10, "amplitude": 1.0, "radius": 3.0}]},
    "sequence": {"generator": "caps-family", "length": 6},
    "profile": {"volumes": [2.0, 4.0, 8.0]},
    "union": {"volumes": [4.0, 9.0]},
    "tolerances": {"limit_tol": 1e-6, "union_tol": 0.06},
    "v_star": 9.0,
    "geometry": {"k": -0.5, "v0": 1.0}
  })");
  CHECK(cfg.name == "full-run_1.x");
  CHECK(cfg.description == "kitchen sink");
  CHECK(cfg.stencil == "crofton16");
  CHECK(cfg.has_seed);
  CHECK(cfg.seed == 42);
  CHECK(cfg.out_dir == "artifacts/full");
  CHECK(cfg.has_manifold);
  CHECK(cfg.width == 32);
  CHECK(cfg.height == 24);
  CHECK(cfg.h == 0.5);
  CHECK(cfg.boundary == BoundaryMode::periodic);
  REQUIRE(cfg.caps.caps.size() == 1);
  CHECK(cfg.caps.caps[0].center == Vertex{10, 10});
  CHECK(cfg.generator == "caps-family");
  CHECK(cfg.length == 6);
  CHECK(cfg.profile_volumes == std::vector<double>{2.0, 4.0, 8.0});
  CHECK(cfg.union_volumes == std::vector<double>{4.0, 9.0});
  CHECK(cfg.tol("limit_tol", 1e-9) == 1e-6);
  CHECK(cfg.v_star == 9.0);
  CHECK(cfg.has_geometry);
  CHECK(cfg.geometry_k == -0.5);
  CHECK(cfg.geometry_v0 == 1.0);
}

TEST_CASE("config diagnostics name the offending field") {
  CHECK(error_mentions("{", "not valid JSON"));
  CHECK(error_mentions("[1,2]", "top level"));
  CHECK(error_mentions(R"({"pipeline":"decompose"})", "field `name` is required"));
  CHECK(error_mentions(R"({"name":"a b","pipeline":"decompose"})", "may use only letters"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"mystery"})", "field `pipeline` must be one of"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose","extra":1})",
                       "field `extra` is not a recognized field"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose","stencil":"hex",
                           "sequence":{"generator":"static-block"}})",
                       "names no known stencil"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose","seed":-3,
                           "sequence":{"generator":"static-block"}})",
                       "field `seed` must be a nonnegative integer"));

  const std::string manifold_err = R"({"name":"t","pipeline":"verify-geometry",
    "geometry":{"k":0.0,"v0":1.0},
    "manifold":{"width":1,"height":8}})";
  CHECK(error_mentions(manifold_err, "field `width` must be at least 2"));
  // the diagnostic carries the line the field sits on
  const std::string bad_h =
      "{\"name\":\"t\",\n\"pipeline\":\"verify-geometry\",\n\"geometry\":{\"k\":0.0,\"v0\":1.0},\n"
      "\"manifold\":{\"width\":8,\"height\":8,\n\"h\":-2}}";
  const std::string msg = parse_error(bad_h);
  CHECK(msg.find("field `h` must be a positive number") != std::string::npos);
  CHECK(msg.find("line 5") != std::string::npos);

  CHECK(error_mentions(R"({"name":"t","pipeline":"verify-geometry","geometry":{"k":0,"v0":1},
                           "manifold":{"width":8,"height":8,"boundary":"weird"}})",
                       "must be \"open\" or \"periodic\""));
  CHECK(error_mentions(R"({"name":"t","pipeline":"verify-geometry","geometry":{"k":0,"v0":1},
                           "manifold":{"width":8,"height":8,
                                       "caps":[{"x":4,"y":4,"amplitude":-1,"radius":2}]}})",
                       "field `amplitude` must be a nonnegative number"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"verify-geometry","geometry":{"k":0,"v0":1},
                           "manifold":{"width":8,"height":8,
                                       "caps":[{"x":4,"y":4,"amplitude":1,"radius":0}]}})",
                       "field `radius` must be a positive number"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"verify-geometry","geometry":{"k":0,"v0":1},
                           "manifold":{"width":8,"height":8,
                                       "caps":[{"x":4,"y":4,"amplitude":1,"radius":2,"sigma":1}]}})",
                       "field `sigma` is not a recognized field"));

  const std::string prof = R"({"name":"t","pipeline":"profile","seed":1,
                               "manifold":{"width":8,"height":8},)";
  CHECK(error_mentions(prof + R"("profile":{"volumes":[4.0,4.0]}})", "must be strictly ascending"));
  CHECK(error_mentions(prof + R"("profile":{"volumes":[-1.0]}})",
                       "must contain only positive volumes"));
  CHECK(error_mentions(prof + R"("profile":{"volumes":[]}})", "non-empty array"));

  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose",
                           "sequence":{"generator":"static-block"},
                           "tolerances":{"limit_tol":0}})",
                       "field `limit_tol` must be a positive number"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose",
                           "sequence":{"generator":"static-block","length":1}})",
                       "field `length` must be at least 2"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose",
                           "sequence":{"generator":"static-block","length":9}})",
                       "must be at most 8"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose",
                           "sequence":{"generator":"mystery-blocks"}})",
                       "names no known generator"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose",
                           "sequence":{"generator":"static-block"},"v_star":0})",
                       "field `v_star` must be a positive number"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"verify-geometry",
                           "manifold":{"width":8,"height":8},"geometry":{"k":0,"v0":0}})",
                       "field `v0` must be a positive number"));

  // pipeline cross-checks
  CHECK(error_mentions(R"({"name":"t","pipeline":"profile","seed":1,
                           "profile":{"volumes":[4.0]}})",
                       "profile needs a `manifold`"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"profile","seed":1,
                           "manifold":{"width":8,"height":8}})",
                       "profile needs `profile` volumes"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"verify-geometry",
                           "manifold":{"width":8,"height":8}})",
                       "verify-geometry needs `geometry` floors"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"decompose"})",
                       "decompose needs a `sequence` generator"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"all"})", "all selects no runnable stage"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"profile",
                           "manifold":{"width":8,"height":8},
                           "profile":{"volumes":[4.0]}})",
                       "field `seed` is required for stochastic pipelines"));
  CHECK(error_mentions(R"({"name":"t","pipeline":"verify-limits",
                           "sequence":{"generator":"caps-family"},
                           "union":{"volumes":[4.0]}})",
                       "field `seed` is required for stochastic pipelines"));
}

TEST_CASE("the bundled catalog is stable and every entry parses") {
  const auto infos = bundled_scenarios();
  REQUIRE(infos.size() == 6);
  const std::vector<std::string> names{"static-block",  "two-diverging-blocks", "caps-family",
                                       "profile-torus", "sharpness-N",          "decaying-caps"};
  for (std::size_t i = 0; i < infos.size(); ++i) {
    CHECK(infos[i].name == names[i]);
    CHECK(infos[i].bundled);
    CHECK_FALSE(infos[i].description.empty());
    const auto cfg = parse_scenario_config(bundled_scenario_config(names[i]));
    CHECK(cfg.name == names[i]);
  }
  CHECK_THROWS_AS(bundled_scenario_config("missing"), ConfigError);
}

TEST_CASE("custom scenario listings skip broken configs silently") {
  namespace fs = std::filesystem;
  const fs::path dir = "scenario_list_tmp";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file(dir / "my.json",
             R"({"name":"my-run","description":"local","pipeline":"decompose",
                 "sequence":{"generator":"static-block"}})");
  write_file(dir / "broken.json", "{nope");
  write_file(dir / "notes.txt", "not a config");

  const auto infos = list_scenarios(dir.string());
  REQUIRE(infos.size() == 7);
  CHECK(infos.back().name == "my-run");
  CHECK_FALSE(infos.back().bundled);
  CHECK(infos.back().description == "local");
  CHECK(list_scenarios("no_such_directory").size() == 6);
  fs::remove_all(dir);
}

TEST_CASE("bundled generators produce the documented families") {
  const auto& st = PerimeterStencil::cut4();

  const auto stat = bundled_sequence("static-block", 8, st);
  CHECK(stat.length() == 8);
  CHECK(stat.volume_bound() == 9.0);
  CHECK(stat.perimeter_bound() == 12.0);
  for (const auto& t : stat.terms()) {
    CHECK(t.grid.is_flat());
    CHECK(t.set.contains(Cell{60, 60}));
    CHECK(t.set.count() == 9);
  }

  const auto div = bundled_sequence("two-diverging-blocks", 8, st);
  CHECK(div.volume_bound() == 18.0);
  CHECK(div.terms().front().set.contains(Cell{88, 60}));
  CHECK(div.terms().back().set.contains(Cell{60, 60}));
  CHECK(div.terms().back().set.contains(Cell{152, 60}));

  const auto fam = bundled_sequence("caps-family", 8, st);
  CHECK(fam.terms().front().grid.max_phi() == 2.0);
  CHECK(fam.terms().front().set.count() == 18);
  CHECK(fam.volume_bound() > 18.0);  // the rider sits on curved volume

  const auto dec = bundled_sequence("decaying-caps", 8, st);
  CHECK(dec.terms().front().grid.max_phi() == 1.0 + std::ldexp(1.0, -6));
  CHECK(dec.terms().back().grid.max_phi() == 1.0 + std::ldexp(1.0, -13));

  const auto sharp = bundled_sequence("sharpness-caps", 8, st);
  for (const auto& t : sharp.terms()) CHECK(t.set.count() == 47);

  CHECK_THROWS_AS(bundled_sequence("mystery", 8, st), ConfigError);
}

TEST_CASE("capacity riders size with their side and pair up") {
  const auto& st = PerimeterStencil::cut4();
  const auto side2 = capacity_rider_sequence(2, 8, st);
  CHECK(side2.terms().front().set.count() == 4);
  const auto side4 = capacity_rider_sequence(4, 8, st);
  CHECK(side4.terms().front().set.count() == 16);
  CHECK(side4.volume_bound() > 16.0);  // cap volume on the rider
  CHECK_THROWS_AS(capacity_rider_sequence(0, 8, st), std::invalid_argument);
  CHECK_THROWS_AS(capacity_rider_sequence(5, 8, st), std::invalid_argument);
  const auto pair = capacity_rider_pair_sequence(8, st);
  CHECK(pair.terms().front().set.count() == 25);
}

TEST_CASE("a bundled decompose run writes its artifact tree and passes") {
  namespace fs = std::filesystem;
  auto cfg = parse_scenario_config(bundled_scenario_config("static-block"));
  cfg.out_dir = "scen_static_tmp";
  fs::remove_all(cfg.out_dir);
  const int rc = run_scenario(cfg);
  CHECK(rc == 0);
  CHECK(fs::exists("scen_static_tmp/sequence_grid.json"));
  CHECK(fs::exists("scen_static_tmp/decomposition.json"));
  CHECK(fs::exists("scen_static_tmp/piece_0.pgm"));
  REQUIRE(fs::exists("scen_static_tmp/summary.json"));

  const json summary = json::parse(read_text_file("scen_static_tmp/summary.json"));
  CHECK(summary.at("scenario") == "static-block");
  CHECK(summary.at("pipeline") == "decompose");
  CHECK(summary.at("stencil") == "cut4");
  CHECK(summary.at("pass") == true);
  bool saw_partition = false;
  for (const auto& row : summary.at("checks")) {
    CHECK(row.at("pass") == true);
    if (row.at("name") == "partition-exact") {
      saw_partition = true;
      CHECK(row.at("value") == 0.0);
    }
  }
  CHECK(saw_partition);

  const json dj = json::parse(read_text_file("scen_static_tmp/decomposition.json"));
  CHECK(dj.at("v_bar") == 9.0);
  CHECK(dj.at("A_bar") == 12.0);
  CHECK(dj.at("incomplete") == false);
  fs::remove_all(cfg.out_dir);
}

TEST_CASE("the geometry pipeline reports floors and fails honest misses") {
  namespace fs = std::filesystem;
  auto cfg = parse_scenario_config(R"({
    "name": "geom-pass", "pipeline": "verify-geometry",
    "manifold": {"width": 16, "height": 16},
    "geometry": {"k": -0.5, "v0": 4.0},
    "out": "scen_geom_tmp"
  })");
  fs::remove_all("scen_geom_tmp");
  CHECK(run_scenario(cfg) == 0);
  REQUIRE(fs::exists("scen_geom_tmp/geometry.json"));
  const json gj = json::parse(read_text_file("scen_geom_tmp/geometry.json"));
  CHECK(gj.at("min_curvature") == 0.0);
  CHECK(gj.at("min_unit_ball_volume") == 5.0);

  cfg.geometry_v0 = 10.0;  // flat unit balls hold 5 cells; this floor must fail
  CHECK(run_scenario(cfg) == 1);
  const json summary = json::parse(read_text_file("scen_geom_tmp/summary.json"));
  CHECK(summary.at("pass") == false);
  fs::remove_all("scen_geom_tmp");
}

TEST_CASE("run_scenario rejects configs that dodged the parser") {
  auto cfg = parse_scenario_config(
      R"({"name":"t","pipeline":"profile","seed":1,
          "manifold":{"width":8,"height":8},"profile":{"volumes":[4.0]}})");
  cfg.has_seed = false;  // hand-built configs must re-pass the seed rule
  CHECK_THROWS_AS(run_scenario(cfg), ConfigError);
  auto cfg2 = parse_scenario_config(
      R"({"name":"t","pipeline":"decompose","sequence":{"generator":"static-block"}})");
  cfg2.stencil = "hex";
  CHECK_THROWS_AS(run_scenario(cfg2), ConfigError);
  cfg2.stencil = "cut4";
  cfg2.generator.clear();
  CHECK_THROWS_AS(run_scenario(cfg2), ConfigError);
}
