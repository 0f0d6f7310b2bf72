#include "isolab/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "isolab/concentration.hpp"
#include "isolab/limits.hpp"
#include "isolab/perimeter.hpp"
#include "isolab/profile.hpp"
#include "isolab/serialize.hpp"
#include "isolab/util.hpp"

namespace isolab {
namespace {

using nlohmann::json;

// ---- config parsing ------------------------------------------------------

// 1-based line of the first occurrence of "key" (quoted) in the text, or -1.
int line_of_key(const std::string& text, const std::string& key) {
  const std::string needle = "\"" + key + "\"";
  int line = 1;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    if (text.substr(pos, eol - pos).find(needle) != std::string::npos) return line;
    if (eol == text.size()) break;
    pos = eol + 1;
    ++line;
  }
  return -1;
}

[[noreturn]] void fail_field(const std::string& text, const std::string& key,
                             const std::string& msg) {
  const int line = line_of_key(text, key);
  std::ostringstream os;
  if (line > 0)
    os << "config line " << line << ": ";
  else
    os << "config: ";
  os << "field `" << key << "` " << msg;
  throw ConfigError(os.str());
}

void require_key(const std::string& text, const json& obj, const std::string& key) {
  if (!obj.contains(key)) fail_field(text, key, "is required");
}

void reject_unknown(const std::string& text, const json& obj,
                    const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key())) fail_field(text, it.key(), "is not a recognized field");
}

double need_number(const std::string& text, const json& obj, const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_number()) fail_field(text, key, "must be a number");
  return v.get<double>();
}

double need_positive(const std::string& text, const json& obj, const std::string& key) {
  const double x = need_number(text, obj, key);
  if (!(x > 0.0)) fail_field(text, key, "must be a positive number");
  return x;
}

double need_nonnegative(const std::string& text, const json& obj, const std::string& key) {
  const double x = need_number(text, obj, key);
  if (!(x >= 0.0)) fail_field(text, key, "must be a nonnegative number");
  return x;
}

int need_int_at_least(const std::string& text, const json& obj, const std::string& key,
                      int lo) {
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail_field(text, key, "must be an integer");
  const long long x = v.get<long long>();
  if (x < lo) fail_field(text, key, "must be at least " + std::to_string(lo));
  return static_cast<int>(x);
}

std::string need_string(const std::string& text, const json& obj, const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_string()) fail_field(text, key, "must be a string");
  return v.get<std::string>();
}

std::vector<double> need_ascending_volumes(const std::string& text, const json& obj,
                                           const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_array() || v.empty()) fail_field(text, key, "must be a non-empty array of numbers");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) fail_field(text, key, "must contain only numbers");
    const double x = e.get<double>();
    if (!(x > 0.0)) fail_field(text, key, "must contain only positive volumes");
    if (!out.empty() && !(x > out.back()))
      fail_field(text, key, "must be strictly ascending");
    out.push_back(x);
  }
  return out;
}

const std::set<std::string>& known_generators() {
  static const std::set<std::string> g = {"static-block", "two-diverging-blocks", "caps-family",
                                          "sharpness-caps", "decaying-caps"};
  return g;
}

const std::set<std::string>& known_pipelines() {
  static const std::set<std::string> p = {"profile", "decompose", "verify-geometry",
                                          "verify-limits", "all"};
  return p;
}

// ---- bundled catalog -----------------------------------------------------

struct BundledEntry {
  const char* name;
  const char* config;
};

// Layouts keep every active cell at least twice the largest working radius
// (30 length units at eight indices) away from the open walls, and cluster
// separations stay ahead of ball reach at every index.
const BundledEntry kBundled[] = {
    {"static-block", R"({
  "name": "static-block",
  "description": "one motionless block; the decomposition is a single bounded piece with empty leftover",
  "pipeline": "decompose",
  "stencil": "cut4",
  "sequence": {"generator": "static-block", "length": 8}
})"},
    {"two-diverging-blocks", R"({
  "name": "two-diverging-blocks",
  "description": "two blocks drifting apart; both pieces diverge and land on their own flat charts",
  "pipeline": "verify-limits",
  "stencil": "cut4",
  "v_star": 9.0,
  "sequence": {"generator": "two-diverging-blocks", "length": 8},
  "tolerances": {"limit_window": 8.0, "limit_tol": 1e-9, "cluster_threshold": 16.0}
})"},
    {"caps-family", R"({
  "name": "caps-family",
  "description": "a rider block on a traveling curvature cap plus a static block; the cap chart joins the union profile",
  "pipeline": "verify-limits",
  "stencil": "cut4",
  "seed": 7,
  "v_star": 9.0,
  "sequence": {"generator": "caps-family", "length": 8},
  "union": {"volumes": [4.0, 9.0, 16.0]},
  "tolerances": {"limit_window": 8.0, "limit_tol": 1e-9, "cluster_threshold": 16.0, "union_tol": 0.06}
})"},
    {"profile-torus", R"({
  "name": "profile-torus",
  "description": "flat torus profile: relaxation envelope floor under the annealed curve",
  "pipeline": "profile",
  "stencil": "cut4",
  "seed": 20260816,
  "manifold": {"width": 16, "height": 16, "h": 1.0, "boundary": "periodic"},
  "profile": {"volumes": [8.0, 16.0, 32.0, 48.0]},
  "tolerances": {"continuity_jump": 16.0}
})"},
    {"sharpness-N", R"({
  "name": "sharpness-N",
  "description": "three near-equal riders on identical caps; the piece count meets the capacity bound with equality",
  "pipeline": "decompose",
  "stencil": "cut4",
  "sequence": {"generator": "sharpness-caps", "length": 8}
})"},
    {"decaying-caps", R"({
  "name": "decaying-caps",
  "description": "a rider on a cap whose amplitude halves each index; the detected chart snaps to the flat plane",
  "pipeline": "verify-limits",
  "stencil": "cut4",
  "sequence": {"generator": "decaying-caps", "length": 8},
  "tolerances": {"limit_window": 8.0, "limit_tol": 1e-3, "cluster_threshold": 16.0, "convergence_tol": 0.01, "volume_tol": 0.1}
})"},
};

// ---- bundled sequence generators -----------------------------------------

std::vector<Cell> block_cells(int x0, int y0, int w, int h) {
  std::vector<Cell> cells;
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) cells.push_back(Cell{x, y});
  return cells;
}

void append_cells(std::vector<Cell>& dst, const std::vector<Cell>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

SetSequence bundled_sequence(const std::string& generator, int length,
                             const PerimeterStencil& stencil) {
  std::vector<SequenceTerm> terms;
  auto add = [&](const ConformalGrid& g, const std::vector<Cell>& cells) {
    terms.push_back(SequenceTerm{g, IndicatorSet::from_cells(g, cells)});
  };
  if (generator == "static-block") {
    const ConformalGrid g = ConformalGrid::flat(123, 123, 1.0, BoundaryMode::open);
    for (int j = 0; j < length; ++j) add(g, block_cells(60, 60, 3, 3));
  } else if (generator == "two-diverging-blocks") {
    const ConformalGrid g = ConformalGrid::flat(215, 123, 1.0, BoundaryMode::open);
    for (int j = 0; j < length; ++j) {
      std::vector<Cell> cells = block_cells(88 - 4 * j, 60, 3, 3);
      append_cells(cells, block_cells(124 + 4 * j, 60, 3, 3));
      add(g, cells);
    }
  } else if (generator == "caps-family") {
    for (int j = 0; j < length; ++j) {
      const int rx = 104 + 8 * j;
      CapSpec spec;
      spec.caps.push_back(Cap{Vertex{rx + 1, 61}, 1.0, 4.0});
      const ConformalGrid g =
          ConformalGrid::plane_with_caps(226, 123, 1.0, BoundaryMode::open, spec);
      std::vector<Cell> cells = block_cells(60, 60, 3, 3);
      append_cells(cells, block_cells(rx, 60, 3, 3));
      add(g, cells);
    }
  } else if (generator == "decaying-caps") {
    for (int j = 0; j < length; ++j) {
      const int rx = 104 + 8 * j;
      CapSpec spec;
      spec.caps.push_back(Cap{Vertex{rx + 1, 61}, std::ldexp(1.0, -(6 + j)), 4.0});
      const ConformalGrid g =
          ConformalGrid::plane_with_caps(225, 123, 1.0, BoundaryMode::open, spec);
      add(g, block_cells(rx, 60, 3, 3));
    }
  } else if (generator == "sharpness-caps") {
    // three 4x4 riders on bitwise-identical caps; the third loses one corner
    // cell, so the total volume sits just below three whole capacities.
    for (int j = 0; j < length; ++j) {
      const int bx[3] = {60, 104 + 6 * j, 148 + 12 * j};
      CapSpec spec;
      for (int b = 0; b < 3; ++b) spec.caps.push_back(Cap{Vertex{bx[b] + 2, 62}, 1.0, 4.0});
      const ConformalGrid g =
          ConformalGrid::plane_with_caps(296, 124, 1.0, BoundaryMode::open, spec);
      std::vector<Cell> cells;
      for (int b = 0; b < 3; ++b) append_cells(cells, block_cells(bx[b], 60, 4, 4));
      std::erase(cells, Cell{bx[2] + 3, 63});
      add(g, cells);
    }
  } else {
    throw ConfigError("config: field `generator` names no known generator");
  }
  return SetSequence::with_measured_bounds(std::move(terms), stencil);
}

SetSequence capacity_rider_sequence(int side, int length, const PerimeterStencil& stencil) {
  if (side < 1 || side > 4)
    throw std::invalid_argument("capacity_rider_sequence: side must be in [1, 4]");
  CapSpec spec;
  spec.caps.push_back(Cap{Vertex{62, 62}, 1.0, 4.0});
  const ConformalGrid g = ConformalGrid::plane_with_caps(125, 124, 1.0, BoundaryMode::open, spec);
  std::vector<SequenceTerm> terms;
  for (int j = 0; j < length; ++j)
    terms.push_back(SequenceTerm{g, IndicatorSet::from_cells(g, block_cells(60, 60, side, side))});
  return SetSequence::with_measured_bounds(std::move(terms), stencil);
}

SetSequence capacity_rider_pair_sequence(int length, const PerimeterStencil& stencil) {
  CapSpec spec;
  spec.caps.push_back(Cap{Vertex{62, 62}, 1.0, 4.0});
  spec.caps.push_back(Cap{Vertex{152, 62}, 1.0, 4.0});
  const ConformalGrid g = ConformalGrid::plane_with_caps(215, 124, 1.0, BoundaryMode::open, spec);
  std::vector<SequenceTerm> terms;
  for (int j = 0; j < length; ++j) {
    std::vector<Cell> cells = block_cells(60, 60, 4, 4);
    append_cells(cells, block_cells(150, 60, 3, 3));
    terms.push_back(SequenceTerm{g, IndicatorSet::from_cells(g, cells)});
  }
  return SetSequence::with_measured_bounds(std::move(terms), stencil);
}

namespace {

// ---- artifact helpers ----------------------------------------------------

struct CheckRow {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string report;
};

json checks_json(const std::vector<CheckRow>& rows) {
  json arr = json::array();
  for (const CheckRow& r : rows) {
    const double v = std::isfinite(r.value) ? r.value : 0.0;
    arr.push_back(json{{"name", r.name}, {"pass", r.pass}, {"value", v}, {"report", r.report}});
  }
  return arr;
}

std::string hex_id(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string grid_digest(const ConformalGrid& g) {
  const std::string s = grid_to_string(g);
  return hex_id(fnv1a(s.data(), s.size()));
}

// Lower envelope spanned by the relaxation curve's vertices; (0, 0) is an
// implicit vertex (the empty set), and the floor extends flat past the last.
double envelope_at(const ProfileCurve& curve, double v) {
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, 0.0);
  for (const ProfilePoint& p : curve.points)
    if (p.v > 1e-12) pts.emplace_back(p.v, p.I_v);
  if (v <= pts.front().first) return 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (v <= pts[i + 1].first + 1e-12) {
      const double t = (v - pts[i].first) / (pts[i + 1].first - pts[i].first);
      return pts[i].second + t * (pts[i + 1].second - pts[i].second);
    }
  }
  return pts.back().second;
}

// ---- pipeline stages -----------------------------------------------------

void run_geometry_stage(const ScenarioConfig& cfg, const ConformalGrid& g,
                        const std::string& out, std::vector<CheckRow>& rows) {
  const GeometryReport rep = g.verify_bounded_geometry(cfg.geometry_k, cfg.geometry_v0);
  json gj = {
      {"k", rep.k},
      {"v0", rep.v0},
      {"min_curvature", rep.min_curvature},
      {"min_unit_ball_volume", rep.min_unit_ball_volume},
      {"curvature_pass", rep.passes.curvature},
      {"ball_pass", rep.passes.ball},
      {"curvature_vertices_scanned", rep.curvature_vertices_scanned},
      {"ball_centers_scanned", rep.ball_centers_scanned},
      {"clipped_centers_excluded", rep.clipped_centers_excluded},
  };
  write_json_file(out + "/geometry.json", gj);
  rows.push_back({"geometry-curvature-floor", rep.passes.curvature, rep.min_curvature,
                  "geometry.json"});
  rows.push_back({"geometry-ball-floor", rep.passes.ball, rep.min_unit_ball_volume,
                  "geometry.json"});
}

void run_profile_stage(const ScenarioConfig& cfg, const ConformalGrid& g,
                       const PerimeterStencil& stencil, const std::string& out,
                       std::vector<CheckRow>& rows) {
  const std::vector<double> lambdas = breakpoint_lambda_schedule(g, stencil);
  const ProfileCurve lag = lagrangian_cut_profile(g, lambdas, stencil);
  write_text_file(out + "/lagrangian.csv", profile_curve_csv(lag));

  const AnnealSchedule schedule;
  const ProfileCurve ann =
      annealed_profile_curve(g, cfg.profile_volumes, stencil, schedule, cfg.seed);
  write_text_file(out + "/profile.csv", profile_curve_csv(ann));

  double worst_gap = std::numeric_limits<double>::infinity();
  json gaps = json::array();
  for (const ProfilePoint& p : ann.points) {
    const double gap = p.I_v - envelope_at(lag, p.v);
    worst_gap = std::min(worst_gap, gap);
    gaps.push_back(json{{"v", p.v}, {"I_v", p.I_v}, {"envelope_gap", gap}});
  }
  if (ann.points.empty()) worst_gap = 0.0;
  rows.push_back({"profile-envelope-floor", worst_gap >= -1e-9, worst_gap, "profile.json"});

  json pj = {
      {"grid_id", hex_id(ann.grid_id)},
      {"stencil", stencil_name(ann.stencil)},
      {"lambda_count", lambdas.size()},
      {"points", gaps},
  };

  if (ann.points.size() >= 3) {
    const double jump_tol = cfg.tol("continuity_jump", 4.0 * g.spacing() * g.max_phi());
    const ContinuityReport cont = profile_continuity_report(ann, jump_tol);
    pj["continuity"] = {{"max_jump", cont.max_jump},
                        {"max_jump_index", cont.max_jump_index},
                        {"max_modulus_ratio", cont.max_modulus_ratio},
                        {"tolerance", cont.tolerance},
                        {"flagged", cont.flagged}};
    rows.push_back({"profile-continuity", !cont.flagged, cont.max_jump, "profile.json"});
  }

  bool all_achieved = true;
  int achieved = 0;
  for (const ProfilePoint& p : ann.points) {
    all_achieved = all_achieved && p.achieved;
    achieved += p.achieved ? 1 : 0;
  }
  rows.push_back({"profile-achieved", all_achieved, static_cast<double>(achieved),
                  "profile.json"});
  write_json_file(out + "/profile.json", pj);
}

json piece_to_json(const Piece& p) {
  json centers = json::array();
  for (const Vertex& c : p.centers) centers.push_back(json::array({c.x, c.y}));
  json trace_volumes = json::array();
  for (const IndicatorSet& t : p.trace) trace_volumes.push_back(t.volume());
  return json{
      {"v_i", p.v_i},
      {"A_i", p.A_i},
      {"tail_std", p.tail_std},
      {"centers", centers},
      {"radii", p.radii},
      {"budgets", p.budgets},
      {"added_perimeter", p.added_perimeter},
      {"trace_volumes", trace_volumes},
      {"source_volume", p.source_volume},
      {"source_perimeter", p.source_perimeter},
      {"source_q1", p.source_q1},
  };
}

struct DecomposeOutcome {
  Decomposition dec;
  double v_star_eff = 0.0;
};

DecomposeOutcome run_decompose_stage(const ScenarioConfig& cfg, const PerimeterStencil& stencil,
                                     const std::string& out, std::vector<CheckRow>& rows) {
  const SetSequence seq = bundled_sequence(cfg.generator, cfg.length, stencil);
  DecomposeOutcome outcome;
  outcome.dec = decompose(seq, stencil, DecomposeParams{});
  const Decomposition& dec = outcome.dec;
  const int K = static_cast<int>(dec.retained_terms.size());
  const int N = static_cast<int>(dec.pieces.size());
  const std::string rep = "decomposition.json";

  write_json_file(out + "/sequence_grid.json", grid_to_json(dec.retained_terms.back().grid));
  for (int i = 0; i < N; ++i)
    write_text_file(out + "/piece_" + std::to_string(i) + ".pgm",
                    set_to_pgm(dec.pieces[i].trace.back()));

  json dj = {
      {"generator", cfg.generator},
      {"length", cfg.length},
      {"retained", dec.subsequence},
      {"volume_bound", dec.volume_bound},
      {"perimeter_bound", dec.perimeter_bound},
      {"stop_threshold", dec.stop_threshold},
      {"tail_window", dec.tail_window},
      {"v_bar", dec.v_bar},
      {"A_bar", dec.A_bar},
      {"slack", dec.slack},
      {"residual_tail_volume", dec.residual_tail_volume},
      {"incomplete", dec.incomplete},
      {"evanescence_diagnostic", dec.evanescence_diagnostic},
  };
  json pieces = json::array();
  for (const Piece& p : dec.pieces) pieces.push_back(piece_to_json(p));
  dj["pieces"] = pieces;

  rows.push_back({"decompose-complete", !dec.incomplete && !dec.evanescence_diagnostic,
                  static_cast<double>(N), rep});

  // every retained term must split exactly into the piece traces + leftover
  double defect = 0.0;
  for (int k = 0; k < K; ++k) {
    const ConformalGrid& g = dec.retained_terms[k].grid;
    IndicatorSet rest = dec.retained_terms[k].set;
    for (const Piece& p : dec.pieces) {
      const IndicatorSet overlap = set_intersect(g, p.trace[k], rest);
      defect += std::abs(p.trace[k].volume() - overlap.volume());
      rest = set_minus(g, rest, p.trace[k]);
    }
    defect += l1_distance(g, rest, dec.leftover[k]);
  }
  rows.push_back({"partition-exact", defect == 0.0, defect, rep});

  double min_budget_slack = std::numeric_limits<double>::infinity();
  for (const Piece& p : dec.pieces)
    for (std::size_t k = 0; k < p.budgets.size(); ++k)
      min_budget_slack = std::min(min_budget_slack, p.budgets[k] - p.added_perimeter[k]);
  if (!std::isfinite(min_budget_slack)) min_budget_slack = 0.0;
  rows.push_back({"cut-budgets", min_budget_slack >= -1e-12, min_budget_slack, rep});

  double min_capture_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i + 1 < N; ++i) {
    const double margin = dec.pieces[i].v_i + dec.pieces[i].tail_std +
                          dec.pieces[i + 1].tail_std + 1e-9 - dec.pieces[i + 1].v_i;
    min_capture_margin = std::min(min_capture_margin, margin);
  }
  if (!std::isfinite(min_capture_margin)) min_capture_margin = 0.0;
  rows.push_back({"monotone-capture", min_capture_margin >= 0.0, min_capture_margin, rep});

  std::vector<double> term_volumes;
  for (const SequenceTerm& t : dec.retained_terms) term_volumes.push_back(t.set.volume());
  const double vmax = *std::max_element(term_volumes.begin(), term_volumes.end());
  const double vmin = *std::min_element(term_volumes.begin(), term_volumes.end());
  if (vmax - vmin <= 1e-9 * std::max(1.0, vmax)) {
    const double err = std::abs(dec.v_bar + dec.residual_tail_volume - term_volumes.front());
    rows.push_back({"volume-accounting", err <= dec.stop_threshold, err, rep});
  }

  const double per_margin = dec.perimeter_bound + dec.slack + 1e-9 - dec.A_bar;
  rows.push_back({"perimeter-accounting", per_margin >= 0.0, per_margin, rep});

  const std::span<const Decomposition> one(&dec, 1);
  const double c_cal = calibrate_nonevanescence(one);
  const NonevanescenceAudit audit = audit_nonevanescence(one, c_cal);
  dj["nonevanescence"] = {{"c_cal", c_cal},
                          {"pass", audit.pass},
                          {"worst_margin", audit.worst_margin},
                          {"checks", audit.checks}};
  rows.push_back({"nonevanescence", audit.pass && c_cal > 0.0, audit.worst_margin, rep});

  if (dec.retained_terms.front().grid.boundary_mode() == BoundaryMode::open) {
    // open-plane runs must keep active cells >= 2R clear of the walls so the
    // working balls never feel the artificial boundary
    double min_wall_slack = std::numeric_limits<double>::infinity();
    for (const Piece& p : dec.pieces) {
      for (int k = 0; k < K; ++k) {
        const ConformalGrid& g = dec.retained_terms[k].grid;
        const double h = g.spacing();
        p.trace[k].for_each_cell([&](Cell c) {
          const int cells =
              std::min(std::min(c.x, c.y), std::min(g.width() - 1 - c.x, g.height() - 1 - c.y));
          min_wall_slack = std::min(min_wall_slack, h * cells - 2.0 * p.radii[k]);
        });
      }
    }
    if (!std::isfinite(min_wall_slack)) min_wall_slack = 0.0;
    rows.push_back({"wall-guard", min_wall_slack >= -1e-9, min_wall_slack, rep});
  }

  outcome.v_star_eff = cfg.v_star;
  const bool sharpness = cfg.generator == "sharpness-caps";
  if (sharpness) {
    const SetSequence cal = capacity_rider_sequence(4, cfg.length, stencil);
    const Decomposition cdec = decompose(cal, stencil, DecomposeParams{});
    const bool cal_ok = cdec.pieces.size() == 1 && !cdec.incomplete;
    const double u = cal_ok ? cdec.pieces[0].v_i : 0.0;
    dj["v_star_cal"] = u;
    rows.push_back({"capacity-calibration", cal_ok && u > 0.0, u, rep});
    outcome.v_star_eff = u;
  }

  if (outcome.v_star_eff > 0.0) {
    const PieceCountReport pc = check_piece_count_bound(dec, dec.volume_bound, outcome.v_star_eff);
    dj["piece_count"] = {{"pieces", pc.pieces},     {"bound", pc.bound},
                         {"v", pc.v},               {"v_star", pc.v_star},
                         {"chain_lhs", pc.chain_lhs}, {"chain_rhs", pc.chain_rhs}};
    rows.push_back({"piece-count-bound", pc.pass, static_cast<double>(pc.bound), rep});
    rows.push_back({"piece-count-chain", pc.chain_pass, pc.chain_rhs - pc.chain_lhs, rep});
    if (sharpness)
      rows.push_back({"piece-count-sharp", pc.pieces == pc.bound,
                      static_cast<double>(pc.pieces), rep});
  }

  write_json_file(out + "/" + rep, dj);
  return outcome;
}

void run_limits_stage(const ScenarioConfig& cfg, const PerimeterStencil& stencil,
                      const std::string& out, const Decomposition& dec,
                      std::vector<CheckRow>& rows) {
  const int K = static_cast<int>(dec.retained_terms.size());
  const double h = dec.retained_terms.front().grid.spacing();
  const int tail = std::min(dec.tail_window > 0 ? dec.tail_window : 5, K);
  const double window = cfg.tol("limit_window", 8.0 * h);
  const double ltol = cfg.tol("limit_tol", 1e-9);

  std::vector<std::vector<Vertex>> tracks;
  for (const Piece& p : dec.pieces) tracks.push_back(piece_anchor_track(p));

  // mirrors the assembler's bounded-track rule: tail wobble above two cells
  // means the piece is walking off at desk scale
  auto diverging = [&](const std::vector<Vertex>& t) {
    const int T = std::min(tail, static_cast<int>(t.size()));
    const Vertex last = t.back();
    int drift = 0;
    for (int j = static_cast<int>(t.size()) - T; j < static_cast<int>(t.size()); ++j)
      drift = std::max(drift, std::max(std::abs(t[j].x - last.x), std::abs(t[j].y - last.y)));
    return drift > 2;
  };

  std::vector<int> div_ids;
  for (std::size_t i = 0; i < tracks.size(); ++i)
    if (diverging(tracks[i])) div_ids.push_back(static_cast<int>(i));

  std::vector<std::vector<Vertex>> div_tracks;
  for (int id : div_ids) div_tracks.push_back(tracks[id]);
  const std::vector<std::vector<int>> blocks = cluster_diverging_tracks(
      dec.retained_terms, div_tracks, cfg.tol("cluster_threshold", 16.0 * h), tail);
  json jclusters = json::array();
  for (const std::vector<int>& b : blocks) {
    json ids = json::array();
    for (int m : b) ids.push_back(div_ids[m]);
    jclusters.push_back(ids);
  }

  json lj = {{"clusters", jclusters}};
  std::vector<LimitManifold> manifolds;
  std::string detect_error;
  double worst_resid = 0.0;
  for (int id : div_ids) {
    try {
      LimitManifold lm =
          detect_limit_manifold(dec.retained_terms, tracks[id], window, ltol, id, tail);
      for (double r : lm.c0_residuals) worst_resid = std::max(worst_resid, r);
      manifolds.push_back(std::move(lm));
    } catch (const std::exception& e) {
      detect_error = e.what();
      break;
    }
  }
  rows.push_back({"limit-detection", detect_error.empty(), worst_resid, "limits.json"});

  json jmanifolds = json::array();
  for (std::size_t m = 0; m < manifolds.size(); ++m) {
    const LimitManifold& lm = manifolds[m];
    const std::string chart_file = "chart_" + std::to_string(m) + ".json";
    write_json_file(out + "/" + chart_file, grid_to_json(lm.chart));
    jmanifolds.push_back(json{{"piece", lm.source_piece},
                              {"chart", chart_file},
                              {"chart_id", grid_digest(lm.chart)},
                              {"snapped_flat", lm.snapped_flat},
                              {"window_radius", lm.window_radius},
                              {"tolerance", lm.tolerance},
                              {"retained", lm.retained},
                              {"c0_residuals", lm.c0_residuals}});
  }
  lj["manifolds"] = jmanifolds;
  if (!detect_error.empty()) {
    lj["error"] = detect_error;
    write_json_file(out + "/limits.json", lj);
    return;
  }

  AssembleParams ap;
  ap.tail_window = tail;
  GeneralizedRegion region;
  try {
    region = assemble_generalized_region(dec, manifolds, stencil, ap);
  } catch (const std::exception& e) {
    lj["error"] = e.what();
    write_json_file(out + "/limits.json", lj);
    rows.push_back({"region-assemble", false, 0.0, "limits.json"});
    return;
  }
  rows.push_back({"region-assemble", true, static_cast<double>(region.components.size()),
                  "limits.json"});

  json jcomps = json::array();
  double sum_v = 0.0, sum_p = 0.0;
  for (const RegionComponent& comp : region.components) {
    sum_v += comp.volume;
    sum_p += comp.perimeter;
    jcomps.push_back(json{{"piece", comp.piece},
                          {"on_base", comp.on_base},
                          {"limit_index", comp.limit_index},
                          {"volume", comp.volume},
                          {"perimeter", comp.perimeter},
                          {"set", set_to_json(comp.set)}});
  }
  lj["region"] = {{"components", jcomps},
                  {"total_volume", region.total_volume},
                  {"total_perimeter", region.total_perimeter}};
  write_json_file(out + "/limits.json", lj);

  rows.push_back({"region-volume-additivity",
                  region.total_volume == sum_v && region.total_perimeter == sum_p,
                  region.total_volume - sum_v, "limits.json"});
  const double vtol = cfg.tol("volume_tol", 1e-9);
  const double ptol = cfg.tol("perimeter_tol", vtol);
  rows.push_back({"region-volume-matches-pieces", std::abs(region.total_volume - dec.v_bar) <= vtol,
                  region.total_volume - dec.v_bar, "limits.json"});
  rows.push_back({"region-perimeter-matches-pieces",
                  std::abs(region.total_perimeter - dec.A_bar) <= ptol,
                  region.total_perimeter - dec.A_bar, "limits.json"});

  ConvergenceParams cp;
  cp.tol = cfg.tol("convergence_tol", 1e-9);
  cp.lsc_tol = cfg.tol("lsc_tol", 1e-9);
  cp.volume_tol = vtol;
  cp.window_radius = window;
  cp.tail_window = tail;
  const ConvergenceReport cr = check_multipointed_convergence(dec, region, stencil, cp);

  json jtracks = json::array();
  double worst_tail = 0.0;
  for (const TrackConvergence& tc : cr.tracks) {
    worst_tail = std::max(worst_tail, std::max(tc.tail_l1, tc.tail_c0));
    jtracks.push_back(json{{"piece", tc.piece},
                           {"l1_residuals", tc.l1_residuals},
                           {"c0_residuals", tc.c0_residuals},
                           {"tail_l1", tc.tail_l1},
                           {"tail_c0", tc.tail_c0},
                           {"pass", tc.pass}});
  }
  json cj = {{"tolerance", cr.tolerance},
             {"tracks", jtracks},
             {"liminf_tail_perimeter", cr.liminf_tail_perimeter},
             {"tail_volume", cr.tail_volume},
             {"lower_semicontinuity_pass", cr.lower_semicontinuity_pass},
             {"volume_continuity_pass", cr.volume_continuity_pass},
             {"pass", cr.pass}};
  write_json_file(out + "/convergence.json", cj);

  rows.push_back({"multipointed-convergence", cr.pass, worst_tail, "convergence.json"});
  rows.push_back({"lower-semicontinuity", cr.lower_semicontinuity_pass,
                  cr.liminf_tail_perimeter - region.total_perimeter, "convergence.json"});
  rows.push_back({"volume-continuity", cr.volume_continuity_pass,
                  cr.tail_volume - region.total_volume, "convergence.json"});

  if (!cfg.union_volumes.empty()) {
    std::vector<ConformalGrid> charts;
    for (const LimitManifold& lm : manifolds) charts.push_back(lm.chart);
    const UnionProfileReport ur =
        profile_union_equality(dec.retained_terms.back().grid, charts, cfg.union_volumes,
                               stencil, AnnealSchedule{}, cfg.seed, cfg.tol("union_tol", 0.06));
    json uj = {{"volumes", ur.volumes},
               {"base_profile", ur.base_profile},
               {"union_profile", ur.union_profile},
               {"max_ratio", ur.max_ratio},
               {"tolerance", ur.tolerance},
               {"pass", ur.pass}};
    write_json_file(out + "/union_profile.json", uj);
    rows.push_back({"union-profile-equality", ur.pass, ur.max_ratio, "union_profile.json"});
  }
}

}  // namespace

// ---- public surface ------------------------------------------------------

ScenarioConfig parse_scenario_config(const std::string& text) {
  const json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) throw ConfigError("config: not valid JSON");
  if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");
  reject_unknown(text, root,
                 {"name", "description", "pipeline", "stencil", "seed", "out", "manifold",
                  "sequence", "profile", "union", "tolerances", "v_star", "geometry"});

  ScenarioConfig cfg;
  require_key(text, root, "name");
  cfg.name = need_string(text, root, "name");
  if (cfg.name.empty()) fail_field(text, "name", "must be a non-empty string");
  for (char c : cfg.name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
      fail_field(text, "name", "may use only letters, digits, '-', '_', '.'");
  if (root.contains("description")) cfg.description = need_string(text, root, "description");

  require_key(text, root, "pipeline");
  cfg.pipeline = need_string(text, root, "pipeline");
  if (!known_pipelines().count(cfg.pipeline))
    fail_field(text, "pipeline",
               "must be one of profile, decompose, verify-geometry, verify-limits, all");

  if (root.contains("stencil")) {
    cfg.stencil = need_string(text, root, "stencil");
    try {
      stencil_from_name(cfg.stencil);
    } catch (const std::exception&) {
      fail_field(text, "stencil", "names no known stencil (cut4, cut8, crofton16)");
    }
  }

  if (root.contains("seed")) {
    const json& s = root.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() &&
                                   s.get<long long>() < 0))
      fail_field(text, "seed", "must be a nonnegative integer");
    cfg.seed = s.get<std::uint64_t>();
    cfg.has_seed = true;
  }

  if (root.contains("out")) cfg.out_dir = need_string(text, root, "out");

  if (root.contains("manifold")) {
    const json& m = root.at("manifold");
    if (!m.is_object()) fail_field(text, "manifold", "must be an object");
    reject_unknown(text, m, {"width", "height", "h", "boundary", "caps"});
    require_key(text, m, "width");
    require_key(text, m, "height");
    cfg.width = need_int_at_least(text, m, "width", 2);
    cfg.height = need_int_at_least(text, m, "height", 2);
    if (m.contains("h")) cfg.h = need_positive(text, m, "h");
    if (m.contains("boundary")) {
      const std::string b = need_string(text, m, "boundary");
      if (b == "open")
        cfg.boundary = BoundaryMode::open;
      else if (b == "periodic")
        cfg.boundary = BoundaryMode::periodic;
      else
        fail_field(text, "boundary", "must be \"open\" or \"periodic\"");
    }
    if (m.contains("caps")) {
      const json& caps = m.at("caps");
      if (!caps.is_array()) fail_field(text, "caps", "must be an array of cap objects");
      for (const json& c : caps) {
        if (!c.is_object()) fail_field(text, "caps", "must contain only cap objects");
        reject_unknown(text, c, {"x", "y", "amplitude", "radius"});
        require_key(text, c, "x");
        require_key(text, c, "y");
        require_key(text, c, "amplitude");
        require_key(text, c, "radius");
        Cap cap;
        cap.center = Vertex{need_int_at_least(text, c, "x", 0),
                            need_int_at_least(text, c, "y", 0)};
        cap.amplitude = need_nonnegative(text, c, "amplitude");
        cap.radius = need_positive(text, c, "radius");
        cfg.caps.caps.push_back(cap);
      }
    }
    cfg.has_manifold = true;
  }

  if (root.contains("sequence")) {
    const json& s = root.at("sequence");
    if (!s.is_object()) fail_field(text, "sequence", "must be an object");
    reject_unknown(text, s, {"generator", "length"});
    require_key(text, s, "generator");
    cfg.generator = need_string(text, s, "generator");
    if (!known_generators().count(cfg.generator))
      fail_field(text, "generator",
                 "names no known generator (static-block, two-diverging-blocks, caps-family, "
                 "sharpness-caps, decaying-caps)");
    cfg.length = 8;
    if (s.contains("length")) cfg.length = need_int_at_least(text, s, "length", 2);
    // the bundled layouts budget wall clearance for the radius schedule of
    // eight indices; longer runs would let working balls feel the walls
    if (cfg.length > 8) fail_field(text, "length", "must be at most 8 for the bundled generators");
  }

  if (root.contains("profile")) {
    const json& p = root.at("profile");
    if (!p.is_object()) fail_field(text, "profile", "must be an object");
    reject_unknown(text, p, {"volumes"});
    require_key(text, p, "volumes");
    cfg.profile_volumes = need_ascending_volumes(text, p, "volumes");
  }

  if (root.contains("union")) {
    const json& u = root.at("union");
    if (!u.is_object()) fail_field(text, "union", "must be an object");
    reject_unknown(text, u, {"volumes"});
    require_key(text, u, "volumes");
    cfg.union_volumes = need_ascending_volumes(text, u, "volumes");
  }

  if (root.contains("tolerances")) {
    const json& t = root.at("tolerances");
    if (!t.is_object()) fail_field(text, "tolerances", "must be an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      if (!it.value().is_number() || !(it.value().get<double>() > 0.0))
        fail_field(text, it.key(), "must be a positive number");
      cfg.tolerances[it.key()] = it.value().get<double>();
    }
  }

  if (root.contains("v_star")) cfg.v_star = need_positive(text, root, "v_star");

  if (root.contains("geometry")) {
    const json& g = root.at("geometry");
    if (!g.is_object()) fail_field(text, "geometry", "must be an object");
    reject_unknown(text, g, {"k", "v0"});
    require_key(text, g, "k");
    require_key(text, g, "v0");
    cfg.geometry_k = need_number(text, g, "k");
    cfg.geometry_v0 = need_positive(text, g, "v0");
    cfg.has_geometry = true;
  }

  // pipeline cross-checks
  const bool profile_stage =
      cfg.pipeline == "profile" ||
      (cfg.pipeline == "all" && cfg.has_manifold && !cfg.profile_volumes.empty());
  const bool limits_stage =
      cfg.pipeline == "verify-limits" || (cfg.pipeline == "all" && !cfg.generator.empty());
  if (cfg.pipeline == "profile") {
    if (!cfg.has_manifold) fail_field(text, "pipeline", "profile needs a `manifold`");
    if (cfg.profile_volumes.empty())
      fail_field(text, "pipeline", "profile needs `profile` volumes");
  }
  if (cfg.pipeline == "verify-geometry") {
    if (!cfg.has_manifold) fail_field(text, "pipeline", "verify-geometry needs a `manifold`");
    if (!cfg.has_geometry)
      fail_field(text, "pipeline", "verify-geometry needs `geometry` floors");
  }
  if ((cfg.pipeline == "decompose" || cfg.pipeline == "verify-limits") && cfg.generator.empty())
    fail_field(text, "pipeline", cfg.pipeline + " needs a `sequence` generator");
  if (cfg.pipeline == "all" && !profile_stage && !limits_stage &&
      !(cfg.has_manifold && cfg.has_geometry))
    fail_field(text, "pipeline", "all selects no runnable stage for this config");
  if ((profile_stage || (limits_stage && !cfg.union_volumes.empty())) && !cfg.has_seed)
    fail_field(text, "seed", "is required for stochastic pipelines");

  return cfg;
}

std::vector<ScenarioInfo> bundled_scenarios() {
  std::vector<ScenarioInfo> out;
  for (const BundledEntry& e : kBundled) {
    const ScenarioConfig cfg = parse_scenario_config(e.config);
    out.push_back(ScenarioInfo{cfg.name, cfg.description, true});
  }
  return out;
}

std::string bundled_scenario_config(const std::string& name) {
  for (const BundledEntry& e : kBundled)
    if (name == e.name) return e.config;
  throw ConfigError("config: `" + name + "` names no bundled scenario");
}

std::vector<ScenarioInfo> list_scenarios(const std::string& custom_dir) {
  std::vector<ScenarioInfo> out = bundled_scenarios();
  if (custom_dir.empty()) return out;
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(custom_dir, ec)) return out;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(custom_dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const fs::path& p : paths) {
    try {
      const ScenarioConfig cfg = parse_scenario_config(read_text_file(p.string()));
      out.push_back(ScenarioInfo{cfg.name, cfg.description, false});
    } catch (const std::exception&) {
      // unreadable or invalid config files are silently skipped in listings
    }
  }
  return out;
}

int run_scenario(const ScenarioConfig& cfg) {
  StencilKind kind;
  try {
    kind = stencil_from_name(cfg.stencil);
  } catch (const std::exception&) {
    throw ConfigError("config: field `stencil` names no known stencil");
  }
  const PerimeterStencil& stencil = PerimeterStencil::get(kind);

  const bool profile_stage =
      cfg.pipeline == "profile" ||
      (cfg.pipeline == "all" && cfg.has_manifold && !cfg.profile_volumes.empty());
  const bool geometry_stage =
      cfg.pipeline == "verify-geometry" ||
      (cfg.pipeline == "all" && cfg.has_manifold && cfg.has_geometry);
  const bool limits_stage =
      cfg.pipeline == "verify-limits" || (cfg.pipeline == "all" && !cfg.generator.empty());
  const bool sequence_stage = limits_stage || cfg.pipeline == "decompose";
  if (!(profile_stage || geometry_stage || sequence_stage))
    throw ConfigError("config: field `pipeline` selects no runnable stage for this config");
  if ((profile_stage || (limits_stage && !cfg.union_volumes.empty())) && !cfg.has_seed)
    throw ConfigError("config: field `seed` is required for stochastic pipelines");

  const std::string out = cfg.out_dir.empty() ? "out/" + cfg.name : cfg.out_dir;
  std::filesystem::create_directories(out);

  std::vector<CheckRow> rows;
  if (profile_stage || geometry_stage) {
    if (!cfg.has_manifold)
      throw ConfigError("config: field `manifold` is required for this pipeline");
    const ConformalGrid g =
        cfg.caps.caps.empty()
            ? ConformalGrid::flat(cfg.width, cfg.height, cfg.h, cfg.boundary)
            : ConformalGrid::plane_with_caps(cfg.width, cfg.height, cfg.h, cfg.boundary,
                                             cfg.caps);
    write_json_file(out + "/grid.json", grid_to_json(g));
    if (geometry_stage) run_geometry_stage(cfg, g, out, rows);
    if (profile_stage) run_profile_stage(cfg, g, stencil, out, rows);
  }
  if (sequence_stage) {
    if (cfg.generator.empty())
      throw ConfigError("config: field `generator` is required for this pipeline");
    const DecomposeOutcome outcome = run_decompose_stage(cfg, stencil, out, rows);
    if (limits_stage) run_limits_stage(cfg, stencil, out, outcome.dec, rows);
  }

  bool pass = true;
  for (const CheckRow& r : rows) pass = pass && r.pass;
  json summary = {{"scenario", cfg.name},
                  {"pipeline", cfg.pipeline},
                  {"stencil", cfg.stencil},
                  {"checks", checks_json(rows)},
                  {"pass", pass}};
  if (cfg.has_seed) summary["seed"] = cfg.seed;
  write_json_file(out + "/summary.json", summary);
  return pass ? 0 : 1;
}

}  // namespace isolab
