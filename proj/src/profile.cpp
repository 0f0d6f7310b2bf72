#include "isolab/profile.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "isolab/mincut.hpp"
#include "isolab/util.hpp"

namespace isolab {

namespace {

// Per-cell cut data shared by the three methods: the cost of cutting each
// directed cell->neighbor adjacency (aggregated when the torus aliases two
// directions onto one neighbor), the open-wall unary cost, and the perimeter
// of each singleton.
struct CellEdges {
  struct Arc {
    int to;
    double w;
  };
  int n = 0;
  int width = 0;
  int height = 0;
  bool periodic = false;
  std::vector<double> cell_vol;
  std::vector<double> singleton;
  std::vector<double> wall;
  std::vector<std::vector<Arc>> arcs;
  double max_cell_vol = 0.0;
  double min_cell_vol = 0.0;
  double mean_edge_weight = 0.0;
};

CellEdges build_cell_edges(const ConformalGrid& g, const PerimeterStencil& stencil) {
  CellEdges e;
  e.n = g.cell_count();
  e.width = g.width();
  e.height = g.height();
  e.periodic = g.boundary_mode() == BoundaryMode::periodic;
  e.cell_vol.resize(e.n);
  e.singleton.assign(e.n, 0.0);
  e.wall.assign(e.n, 0.0);
  e.arcs.resize(e.n);
  const auto& dirs = stencil.directions();
  const bool periodic = g.boundary_mode() == BoundaryMode::periodic;
  double total_w = 0.0;
  long contributions = 0;
  for (int i = 0; i < e.n; ++i) {
    const Cell c = g.cell_at(i);
    e.cell_vol[i] = g.cell_volume(c);
    for (const auto& d : dirs) {
      Cell nb{c.x + d.dx, c.y + d.dy};
      const double w = d.weight * cut_pair_phi(g, c, d.dx, d.dy) * g.spacing();
      if (!periodic && !g.cell_in_range(nb)) {
        e.wall[i] += w;
        e.singleton[i] += w;
        total_w += w;
        ++contributions;
        continue;
      }
      if (periodic) {
        nb.x = ((nb.x % g.width()) + g.width()) % g.width();
        nb.y = ((nb.y % g.height()) + g.height()) % g.height();
      }
      const int j = static_cast<int>(g.cell_index(nb));
      if (j == i) continue;            // torus self-alias: never a cut edge
      e.singleton[i] += w;
      total_w += w;
      ++contributions;
      bool merged = false;
      for (auto& a : e.arcs[i])
        if (a.to == j) {
          a.w += w;
          merged = true;
          break;
        }
      if (!merged) e.arcs[i].push_back({j, w});
    }
    std::sort(e.arcs[i].begin(), e.arcs[i].end(), [](const auto& a, const auto& b) { return a.to < b.to; });
  }
  const auto [mn, mx] = std::minmax_element(e.cell_vol.begin(), e.cell_vol.end());
  e.min_cell_vol = *mn;
  e.max_cell_vol = *mx;
  e.mean_edge_weight = contributions ? total_w / static_cast<double>(contributions) : 0.0;
  return e;
}

bool touches_wall_band(const ConformalGrid& g, const IndicatorSet& s, int guard) {
  if (g.boundary_mode() == BoundaryMode::periodic) return false;
  bool touched = false;
  s.for_each_cell([&](Cell c) {
    if (c.x < guard || c.y < guard || c.x >= g.width() - guard || c.y >= g.height() - guard) touched = true;
  });
  return touched;
}

void sort_and_check_targets(std::vector<double>& volumes) {
  std::sort(volumes.begin(), volumes.end());
  volumes.erase(std::unique(volumes.begin(), volumes.end()), volumes.end());
}

}  // namespace

ProfileCurve brute_force_profile(const ConformalGrid& g, std::span<const double> volumes,
                                 const PerimeterStencil& stencil) {
  const int n = g.cell_count();
  if (n > 20)
    throw std::invalid_argument(
        "exhaustive profile is capped at 20 cells; use the lagrangian or annealed methods");
  const CellEdges edges = build_cell_edges(g, stencil);
  const std::uint32_t masks = 1u << n;
  std::vector<double> vol(masks, 0.0), per(masks, 0.0);
  for (std::uint32_t mask = 1; mask < masks; ++mask) {
    const int i = __builtin_ctz(mask);
    const std::uint32_t rest = mask & (mask - 1);
    vol[mask] = vol[rest] + edges.cell_vol[i];
    double p = per[rest] + edges.singleton[i];
    for (const auto& a : edges.arcs[i])
      if (rest >> a.to & 1u) p -= 2.0 * a.w;  // both orientations leave the cut
    per[mask] = p;
  }

  std::vector<double> targets(volumes.begin(), volumes.end());
  sort_and_check_targets(targets);
  const double window = 0.5 * edges.max_cell_vol + 1e-12;

  ProfileCurve curve;
  curve.grid_id = g.id();
  curve.stencil = stencil.kind();
  for (double v : targets) {
    std::uint32_t best = masks;  // sentinel: none
    double best_p = 0.0, best_err = 0.0;
    for (std::uint32_t mask = 0; mask < masks; ++mask) {
      const double err = std::abs(vol[mask] - v);
      if (err > window) continue;
      if (best == masks || per[mask] < best_p || (per[mask] == best_p && err < best_err)) {
        best = mask;
        best_p = per[mask];
        best_err = err;
      }
    }
    if (best == masks)
      throw std::invalid_argument("no cell subset lies within half a cell volume of target " +
                                  format_double(v));
    std::vector<Cell> cells;
    for (int i = 0; i < n; ++i)
      if (best >> i & 1u) cells.push_back(g.cell_at(i));
    ProfilePoint pt;
    pt.achiever = IndicatorSet::from_cells(g, cells);
    pt.v = v;
    pt.I_v = perimeter(g, *pt.achiever, stencil);  // exact, same path as every other consumer
    pt.volume_error = std::abs(pt.achiever->volume() - v);
    pt.method = "oracle";
    pt.achieved = !touches_wall_band(g, *pt.achiever, 1);
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

namespace {

struct LambdaSolution {
  IndicatorSet set;
  double v;
  double p;
};

LambdaSolution solve_lambda(const ConformalGrid& g, const CellEdges& edges, const PerimeterStencil& stencil,
                            double lambda) {
  const int n = edges.n;
  const int source = n, sink = n + 1;
  MaxFlow net(n + 2);
  for (int i = 0; i < n; ++i) {
    const double cap = lambda * edges.cell_vol[i];
    if (cap > 0.0) net.add_edge(source, i, cap);
    if (edges.wall[i] > 0.0) net.add_edge(i, sink, edges.wall[i]);
    for (const auto& a : edges.arcs[i]) net.add_edge(i, a.to, a.w);
  }
  net.run(source, sink);
  const std::vector<char> side = net.source_side(source);  // minimal optimum
  std::vector<Cell> cells;
  for (int i = 0; i < n; ++i)
    if (side[i]) cells.push_back(g.cell_at(i));
  LambdaSolution sol{IndicatorSet::from_cells(g, cells), 0.0, 0.0};
  sol.v = sol.set.volume();
  sol.p = perimeter(g, sol.set, stencil);
  return sol;
}

void probe_breakpoints(const ConformalGrid& g, const CellEdges& edges, const PerimeterStencil& stencil,
                       const LambdaSolution& lo, const LambdaSolution& hi, std::vector<double>& out,
                       int depth) {
  if (depth > 64) return;  // paranoia; the envelope has at most n+1 vertices
  if (hi.v - lo.v <= 1e-12) return;
  const double lambda = (hi.p - lo.p) / (hi.v - lo.v);
  const LambdaSolution mid = solve_lambda(g, edges, stencil, lambda);
  const double line = lo.p - lambda * lo.v;
  const double eps = 1e-9 * (1.0 + std::abs(line));
  out.push_back(lambda);
  if (mid.p - lambda * mid.v < line - eps) {
    probe_breakpoints(g, edges, stencil, lo, mid, out, depth + 1);
    probe_breakpoints(g, edges, stencil, mid, hi, out, depth + 1);
  }
}

}  // namespace

std::vector<double> breakpoint_lambda_schedule(const ConformalGrid& g, const PerimeterStencil& stencil) {
  const CellEdges edges = build_cell_edges(g, stencil);
  const double max_singleton = *std::max_element(edges.singleton.begin(), edges.singleton.end());
  const double lambda_max = max_singleton / edges.min_cell_vol + 1.0;
  const LambdaSolution lo = solve_lambda(g, edges, stencil, 0.0);
  const LambdaSolution hi = solve_lambda(g, edges, stencil, lambda_max);
  std::vector<double> schedule{0.0, lambda_max};
  probe_breakpoints(g, edges, stencil, lo, hi, schedule, 0);
  std::sort(schedule.begin(), schedule.end());
  schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());
  return schedule;
}

ProfileCurve lagrangian_cut_profile(const ConformalGrid& g, std::span<const double> lambda_schedule,
                                    const PerimeterStencil& stencil) {
  for (double l : lambda_schedule)
    if (!(l >= 0.0)) throw std::invalid_argument("lambda values must be nonnegative");
  const CellEdges edges = build_cell_edges(g, stencil);
  std::vector<LambdaSolution> sols;
  for (double l : lambda_schedule) sols.push_back(solve_lambda(g, edges, stencil, l));
  std::sort(sols.begin(), sols.end(), [](const auto& a, const auto& b) {
    return a.v < b.v || (a.v == b.v && a.p < b.p);
  });
  ProfileCurve curve;
  curve.grid_id = g.id();
  curve.stencil = stencil.kind();
  for (auto& s : sols) {
    if (!curve.points.empty() && curve.points.back().v == s.v) continue;  // keep min-P per volume
    ProfilePoint pt;
    pt.v = s.v;
    pt.I_v = s.p;
    pt.achiever = std::move(s.set);
    pt.method = "lagrangian";
    pt.achieved = !touches_wall_band(g, *pt.achiever, 1);
    pt.volume_error = 0.0;  // the point is defined at its own achieved volume
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

namespace {

// Simulated-annealing state over one grid; all randomness flows from the
// caller's generator so runs are reproducible bit for bit.
class AnnealState {
 public:
  explicit AnnealState(const CellEdges& e) : edges_(e), member_(e.n, 0), where_(e.n, -1) {}

  void add(int i) {
    member_[i] = 1;
    where_[i] = static_cast<int>(cells_.size());
    cells_.push_back(i);
    volume_ += edges_.cell_vol[i];
    perim_ += add_delta(i);
  }
  void remove(int i) {
    perim_ += remove_delta(i);
    member_[i] = 0;
    const int pos = where_[i];
    const int last = cells_.back();
    cells_[pos] = last;
    where_[last] = pos;
    cells_.pop_back();
    where_[i] = -1;
    volume_ -= edges_.cell_vol[i];
  }

  // Perimeter change if cell i (outside) were added / (inside) removed.
  double add_delta(int i) const {
    double d = edges_.singleton[i];
    for (const auto& a : edges_.arcs[i])
      if (member_[a.to]) d -= 2.0 * a.w;
    return d;
  }
  double remove_delta(int i) const {
    double d = -edges_.singleton[i];
    for (const auto& a : edges_.arcs[i])
      if (member_[a.to]) d += 2.0 * a.w;
    return d;
  }

  bool contains(int i) const { return member_[i] != 0; }
  double volume() const { return volume_; }
  double perimeter() const { return perim_; }
  const std::vector<int>& cells() const { return cells_; }
  const std::vector<CellEdges::Arc>& arcs_of(int i) const { return edges_.arcs[i]; }

 private:
  const CellEdges& edges_;
  std::vector<char> member_;
  std::vector<int> cells_;
  std::vector<int> where_;
  double volume_ = 0.0;
  double perim_ = 0.0;
};

double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Largest non-member cell that still fits the budget; volume ties prefer the
// most interior cell (walls cost perimeter and trip the guard band), then the
// lowest index.
int pick_seed(const CellEdges& edges, double budget, const AnnealState& state) {
  int best = -1, best_int = -1;
  double best_vol = 0.0;
  for (int i = 0; i < edges.n; ++i) {
    if (state.contains(i) || edges.cell_vol[i] > budget) continue;
    const int cx = i % edges.width, cy = i / edges.width;
    const int interior = edges.periodic
                             ? 0
                             : std::min(std::min(cx, cy),
                                        std::min(edges.width - 1 - cx, edges.height - 1 - cy));
    if (best < 0 || edges.cell_vol[i] > best_vol ||
        (edges.cell_vol[i] == best_vol && interior > best_int)) {
      best = i;
      best_vol = edges.cell_vol[i];
      best_int = interior;
    }
  }
  return best;
}

long long anchor_dist2(const CellEdges& edges, int anchor, int c) {
  int dx = std::abs(c % edges.width - anchor % edges.width);
  int dy = std::abs(c / edges.width - anchor / edges.width);
  if (edges.periodic) {
    dx = std::min(dx, edges.width - dx);
    dy = std::min(dy, edges.height - dy);
  }
  return static_cast<long long>(dx) * dx + static_cast<long long>(dy) * dy;
}

void greedy_fill(AnnealState& state, const CellEdges& edges, double target, double window) {
  int anchor;
  if (state.cells().empty()) {
    anchor = pick_seed(edges, target + window, state);
    if (anchor < 0) return;  // nothing fits: leave the state empty
    state.add(anchor);
  } else {
    anchor = state.cells().front();
  }
  // Trim first if a warm start overshoots the window.
  while (state.volume() > target + window && !state.cells().empty()) {
    int best = -1;
    double best_d = 0.0;
    for (int i : state.cells()) {
      const double d = state.remove_delta(i);
      if (best < 0 || d < best_d || (d == best_d && i < best)) {
        best = i;
        best_d = d;
      }
    }
    state.remove(best);
  }
  while (state.volume() < target - window) {
    std::vector<int> frontier;
    for (int i : state.cells())
      for (const auto& a : state.arcs_of(i))
        if (!state.contains(a.to)) frontier.push_back(a.to);
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
    int best = -1;
    double best_d = 0.0;
    long long best_r = 0;
    for (int c : frontier) {
      if (state.volume() + edges.cell_vol[c] > target + window) continue;
      const double d = state.add_delta(c);
      const long long r = anchor_dist2(edges, anchor, c);  // compactness tie-break
      if (best < 0 || d < best_d || (d == best_d && r < best_r)) {
        best = c;
        best_d = d;
        best_r = r;
      }
    }
    if (best < 0) {
      // the frontier is gone or every frontier cell busts the window: open a
      // new component wherever the leftover budget still fits
      best = pick_seed(edges, target + window - state.volume(), state);
      if (best < 0) break;
    }
    state.add(best);
  }
}

}  // namespace

ProfilePoint annealed_profile_point(const ConformalGrid& g, double v, const PerimeterStencil& stencil,
                                    const AnnealSchedule& schedule, std::uint64_t seed,
                                    const IndicatorSet* warm_start) {
  if (!(v > 0.0)) throw std::invalid_argument("annealed profile target volume must be positive");
  const CellEdges edges = build_cell_edges(g, stencil);
  const double window = schedule.volume_window > 0.0 ? schedule.volume_window : edges.max_cell_vol;
  if (v > g.total_volume() + window)
    throw std::invalid_argument("annealed profile target volume exceeds the grid's total volume");
  const double t0 = schedule.t0 > 0.0 ? schedule.t0 : std::max(edges.mean_edge_weight, 1e-12);
  const int restarts = std::max(1, schedule.restarts);
  const int iters = std::max(1, schedule.max_iterations / restarts);
  constexpr int kSweep = 32;  // proposals per cooling step

  std::vector<int> best_cells;
  double best_p = 0.0, best_err = 0.0;
  bool have_best = false;
  auto consider = [&](const AnnealState& s) {
    const double err = std::abs(s.volume() - v);
    if (err > window) return;
    if (!have_best || s.perimeter() < best_p - 1e-12 ||
        (std::abs(s.perimeter() - best_p) <= 1e-12 && err < best_err)) {
      have_best = true;
      best_p = s.perimeter();
      best_err = err;
      best_cells = s.cells();
    }
  };

  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ull);
    AnnealState state(edges);
    if (warm_start && r == 0 && !warm_start->is_empty()) {
      warm_start->for_each_cell([&](Cell c) { state.add(g.cell_index(c)); });
    }
    greedy_fill(state, edges, v, window);
    consider(state);
    double temp = t0;
    for (int it = 0; it < iters; ++it) {
      if (it % kSweep == kSweep - 1) temp *= schedule.cooling;
      if (state.cells().empty()) break;
      const int kind = static_cast<int>(rng() % 3);  // 0 add, 1 remove, 2 swap
      const int m = state.cells()[rng() % state.cells().size()];
      double delta = 0.0;
      int add_cell = -1, rem_cell = -1;
      if (kind == 0 || kind == 2) {
        const auto& arcs = state.arcs_of(m);
        if (arcs.empty()) continue;
        const int c = arcs[rng() % arcs.size()].to;
        if (state.contains(c)) continue;
        add_cell = c;
      }
      if (kind == 1 || kind == 2) {
        rem_cell = state.cells()[rng() % state.cells().size()];
        if (rem_cell == add_cell) continue;
      }
      double new_vol = state.volume();
      if (add_cell >= 0) new_vol += edges.cell_vol[add_cell];
      if (rem_cell >= 0) new_vol -= edges.cell_vol[rem_cell];
      if (std::abs(new_vol - v) > window) continue;
      if (add_cell >= 0) {
        delta += state.add_delta(add_cell);
        state.add(add_cell);
      }
      if (rem_cell >= 0) {
        delta += state.remove_delta(rem_cell);
        state.remove(rem_cell);
      }
      if (delta > 0.0 && unit_double(rng) >= std::exp(-delta / temp)) {
        if (rem_cell >= 0) state.add(rem_cell);  // undo, reverse order
        if (add_cell >= 0) state.remove(add_cell);
        continue;
      }
      consider(state);
    }
  }

  if (!have_best)
    throw std::runtime_error("annealing never reached the target volume window (target " +
                             format_double(v) + ")");
  std::vector<Cell> cells;
  cells.reserve(best_cells.size());
  for (int i : best_cells) cells.push_back(g.cell_at(i));
  ProfilePoint pt;
  pt.achiever = IndicatorSet::from_cells(g, cells);
  pt.v = v;
  pt.I_v = perimeter(g, *pt.achiever, stencil);
  pt.volume_error = std::abs(pt.achiever->volume() - v);
  pt.method = "anneal";
  pt.achieved = !touches_wall_band(g, *pt.achiever, schedule.guard_band_cells);
  return pt;
}

ProfileCurve annealed_profile_curve(const ConformalGrid& g, std::span<const double> volumes,
                                    const PerimeterStencil& stencil, const AnnealSchedule& schedule,
                                    std::uint64_t seed) {
  std::vector<double> targets(volumes.begin(), volumes.end());
  sort_and_check_targets(targets);
  ProfileCurve curve;
  curve.grid_id = g.id();
  curve.stencil = stencil.kind();
  const IndicatorSet* warm = nullptr;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    curve.points.push_back(
        annealed_profile_point(g, targets[i], stencil, schedule, seed + i, warm));
    warm = curve.points.back().achiever ? &*curve.points.back().achiever : nullptr;
  }
  return curve;
}

ContinuityReport profile_continuity_report(const ProfileCurve& curve, double jump_tolerance) {
  if (curve.points.size() < 3)
    throw std::invalid_argument("continuity scan needs a curve with at least 3 points");
  ContinuityReport rep;
  rep.tolerance = jump_tolerance;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const double dv = curve.points[i + 1].v - curve.points[i].v;
    if (dv <= 0.0) throw std::invalid_argument("profile curve is not sorted by strictly increasing volume");
    const double jump = std::abs(curve.points[i + 1].I_v - curve.points[i].I_v);
    if (jump > rep.max_jump) {
      rep.max_jump = jump;
      rep.max_jump_index = static_cast<int>(i);
    }
    rep.max_modulus_ratio = std::max(rep.max_modulus_ratio, jump / std::sqrt(dv));
  }
  rep.flagged = rep.max_jump > jump_tolerance;
  return rep;
}

std::string profile_curve_csv(const ProfileCurve& curve) {
  std::ostringstream out;
  out << "v,I_v,method,achieved,volume_error\n";
  for (const auto& p : curve.points) {
    out << format_double(p.v) << ',' << format_double(p.I_v) << ',' << p.method << ','
        << (p.achieved ? "true" : "false") << ',' << format_double(p.volume_error) << '\n';
  }
  return out.str();
}

}  // namespace isolab
