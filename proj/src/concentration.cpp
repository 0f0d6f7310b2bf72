#include "isolab/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include "isolab/serialize.hpp"
#include "isolab/util.hpp"

namespace isolab {

namespace {

std::vector<SequenceTerm> checked_terms(std::vector<SequenceTerm> terms, double volume_bound,
                                        double perimeter_bound, const PerimeterStencil& stencil) {
  if (terms.empty()) throw std::invalid_argument("set sequence needs at least one term");
  const double h = terms.front().grid.spacing();
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const auto& t = terms[j];
    if (t.set.grid_id() != t.grid.id())
      throw std::invalid_argument("sequence term " + std::to_string(j) + " pairs a set with a foreign grid");
    if (t.grid.spacing() != h)
      throw std::invalid_argument("sequence terms must share one grid spacing");
    if (t.set.volume() > volume_bound + 1e-9)
      throw std::invalid_argument("sequence term " + std::to_string(j) + " exceeds the volume bound");
    if (perimeter(t.grid, t.set, stencil) > perimeter_bound + 1e-9)
      throw std::invalid_argument("sequence term " + std::to_string(j) + " exceeds the perimeter bound");
  }
  return terms;
}

}  // namespace

SetSequence::SetSequence(std::vector<SequenceTerm> terms, double volume_bound, double perimeter_bound,
                         const PerimeterStencil& stencil)
    : terms_(checked_terms(std::move(terms), volume_bound, perimeter_bound, stencil)),
      volume_bound_(volume_bound),
      perimeter_bound_(perimeter_bound),
      spacing_(terms_.front().grid.spacing()) {}

SetSequence SetSequence::with_measured_bounds(std::vector<SequenceTerm> terms,
                                              const PerimeterStencil& stencil) {
  if (terms.empty()) throw std::invalid_argument("set sequence needs at least one term");
  double v = 0.0, a = 0.0;
  for (const auto& t : terms) {
    v = std::max(v, t.set.volume());
    a = std::max(a, perimeter(t.grid, t.set, stencil));
  }
  return SetSequence(std::move(terms), v, a, stencil);
}

namespace {

// Geometry of one (grid, set) pair reused across center scans: the member
// cells in row-major order, a full-lattice prefix sum of member volumes for
// O(1) box bounds, and the member bounding box.
struct SetGeometry {
  std::vector<Cell> cells;
  std::vector<double> vols;
  double total = 0.0;
  int count = 0;
  std::vector<double> prefix;  // (w+1)*(h+1), prefix[y*(w+1)+x] = sum over [0,x)x[0,y)
  int minx = 0, maxx = -1, miny = 0, maxy = -1;
};

SetGeometry make_geometry(const ConformalGrid& g, const IndicatorSet& set) {
  SetGeometry geo;
  const int w = g.width(), h = g.height();
  std::vector<double> field(static_cast<std::size_t>(w) * h, 0.0);
  geo.minx = w;
  geo.miny = h;
  set.for_each_cell([&](Cell c) {
    const double cv = g.cell_volume(c);
    geo.cells.push_back(c);
    geo.vols.push_back(cv);
    geo.total += cv;
    field[static_cast<std::size_t>(c.y) * w + c.x] = cv;
    geo.minx = std::min(geo.minx, c.x);
    geo.maxx = std::max(geo.maxx, c.x);
    geo.miny = std::min(geo.miny, c.y);
    geo.maxy = std::max(geo.maxy, c.y);
  });
  geo.count = static_cast<int>(geo.cells.size());
  geo.prefix.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += field[static_cast<std::size_t>(y) * w + x];
      geo.prefix[static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1)] =
          geo.prefix[static_cast<std::size_t>(y) * (w + 1) + (x + 1)] + row;
    }
  }
  return geo;
}

// Sum of member volumes over cell rectangle [x0,x1) x [y0,y1), clipped.
double rect_sum(const SetGeometry& geo, int w, int h, int x0, int x1, int y0, int y1) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, w);
  y1 = std::min(y1, h);
  if (x0 >= x1 || y0 >= y1) return 0.0;
  const auto at = [&](int x, int y) { return geo.prefix[static_cast<std::size_t>(y) * (w + 1) + x]; };
  return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
}

// Volume the Chebyshev box of cell radius r around p can contain — an upper
// bound for any metric ball of the radius that produced r.
double box_bound(const SetGeometry& geo, const ConformalGrid& g, Vertex p, int r) {
  const int w = g.width(), h = g.height();
  if (g.boundary_mode() == BoundaryMode::open)
    return rect_sum(geo, w, h, p.x - r, p.x + r + 1, p.y - r, p.y + r + 1);
  if (2 * r + 1 >= w || 2 * r + 1 >= h) return geo.total;
  double sum = 0.0;
  const int x0 = ((p.x - r) % w + w) % w;
  const int y0 = ((p.y - r) % h + h) % h;
  const int xs = 2 * r + 1, ys = 2 * r + 1;
  const int x_first = std::min(xs, w - x0), y_first = std::min(ys, h - y0);
  sum += rect_sum(geo, w, h, x0, x0 + x_first, y0, y0 + y_first);
  if (x_first < xs) sum += rect_sum(geo, w, h, 0, xs - x_first, y0, y0 + y_first);
  if (y_first < ys) sum += rect_sum(geo, w, h, x0, x0 + x_first, 0, ys - y_first);
  if (x_first < xs && y_first < ys) sum += rect_sum(geo, w, h, 0, xs - x_first, 0, ys - y_first);
  return sum;
}

// Distances from one center to cell anchors; closed form on flat grids, one
// shortest-path field otherwise. Queries above `cutoff` are only bounds, so
// pass a cutoff no smaller than every radius the oracle will be tested at.
class DistanceOracle {
 public:
  DistanceOracle(const ConformalGrid& g, Vertex p,
                 double cutoff = std::numeric_limits<double>::infinity())
      : g_(g), p_(p) {
    if (!g.is_flat()) field_ = g.distance_field(p, cutoff);
  }
  double to_cell(Cell c) const {
    if (field_.empty()) return g_.geodesic_distance(p_, Vertex{c.x, c.y});
    return field_[g_.vertex_index(Vertex{c.x, c.y})];
  }

 private:
  const ConformalGrid& g_;
  Vertex p_;
  std::vector<double> field_;
};

struct BallStats {
  double volume = 0.0;
  int count = 0;
};

BallStats set_within(const SetGeometry& geo, const DistanceOracle& dist, double R) {
  BallStats s;
  for (int i = 0; i < geo.count; ++i) {
    if (dist.to_cell(geo.cells[i]) <= R) {
      s.volume += geo.vols[i];
      ++s.count;
    }
  }
  return s;
}

int chebyshev_radius(const ConformalGrid& g, double R) {
  const double shortest_step = g.spacing() * std::min(1.0, g.min_phi());
  return static_cast<int>(std::floor(R / shortest_step + 1e-9));
}

// Non-flat path: one shortest-path field per set cell (the metric is
// symmetric), volumes accumulated into every vertex within R. Per-vertex
// sums accrue in ascending cell order, matching the direct evaluation.
ConcentrationPoint sup_by_accumulation(const ConformalGrid& g, const SetGeometry& geo, double R) {
  std::vector<double> acc(static_cast<std::size_t>(g.distinct_vertex_count()), 0.0);
  for (int i = 0; i < geo.count; ++i) {
    const std::vector<double> field =
        g.distance_field(Vertex{geo.cells[i].x, geo.cells[i].y}, R);
    for (std::size_t idx = 0; idx < field.size(); ++idx)
      if (field[idx] <= R) acc[idx] += geo.vols[i];
  }
  ConcentrationPoint best;
  for (int x = 0; x < g.distinct_cols(); ++x) {
    for (int y = 0; y < g.distinct_rows(); ++y) {
      const double q = acc[static_cast<std::size_t>(g.vertex_index(Vertex{x, y}))];
      if (q > best.Q) {
        best.Q = q;
        best.center = Vertex{x, y};
      }
    }
  }
  return best;
}

ConcentrationPoint sup_over_centers(const ConformalGrid& g, const SetGeometry& geo, double R) {
  ConcentrationPoint best;
  if (geo.count == 0) return best;
  if (!g.is_flat()) return sup_by_accumulation(g, geo, R);
  const int r = chebyshev_radius(g, R);
  const int cols = g.distinct_cols(), rows = g.distinct_rows();
  const bool open = g.boundary_mode() == BoundaryMode::open;
  for (int x = 0; x < cols && best.Q < geo.total; ++x) {
    for (int y = 0; y < rows; ++y) {
      const Vertex p{x, y};
      const double bound = box_bound(geo, g, p, r) * (1.0 + 1e-12) + 1e-12;
      if (bound <= best.Q) continue;
      double exact;
      if (open && g.geodesic_distance(p, Vertex{geo.minx, geo.miny}) <= R &&
          g.geodesic_distance(p, Vertex{geo.maxx, geo.miny}) <= R &&
          g.geodesic_distance(p, Vertex{geo.minx, geo.maxy}) <= R &&
          g.geodesic_distance(p, Vertex{geo.maxx, geo.maxy}) <= R) {
        exact = geo.total;  // balls are convex: the corners pull in the whole bbox
      } else {
        exact = set_within(geo, DistanceOracle(g, p), R).volume;
      }
      if (exact > best.Q) {
        best.Q = exact;
        best.center = p;
      }
      if (best.Q >= geo.total) break;  // nothing can beat full capture
    }
  }
  return best;
}

}  // namespace

ConcentrationPoint concentration_sup(const ConformalGrid& g, const IndicatorSet& set, double R) {
  if (set.grid_id() != g.id()) throw std::invalid_argument("concentration_sup: set belongs to a different grid");
  if (R < 0.0) throw std::invalid_argument("concentration_sup: negative radius");
  const SetGeometry geo = make_geometry(g, set);
  return sup_over_centers(g, geo, R);
}

std::vector<std::pair<double, double>> concentration_function(const ConformalGrid& g,
                                                              const IndicatorSet& set,
                                                              std::span<const double> radii) {
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (radii[i] < radii[i - 1]) throw std::invalid_argument("concentration_function: radii must ascend");
  const SetGeometry geo = make_geometry(g, set);
  std::vector<std::pair<double, double>> out;
  out.reserve(radii.size());
  for (double R : radii) out.emplace_back(R, sup_over_centers(g, geo, R).Q);
  return out;
}

CoareaSelection select_radius_coarea(const ConformalGrid& g, const IndicatorSet& set, Vertex center,
                                     double r_lo, double r_hi, double budget,
                                     const PerimeterStencil& stencil) {
  if (set.grid_id() != g.id()) throw std::invalid_argument("select_radius_coarea: set belongs to a different grid");
  if (!(budget > 0.0)) throw std::invalid_argument("select_radius_coarea: budget must be positive");
  if (r_hi < r_lo) throw std::invalid_argument("select_radius_coarea: empty radius range");
  const SetGeometry geo = make_geometry(g, set);
  const DistanceOracle dist(g, center, r_hi);

  std::vector<double> cell_dist(geo.count);
  std::vector<double> candidates{r_lo};
  for (int i = 0; i < geo.count; ++i) {
    cell_dist[i] = dist.to_cell(geo.cells[i]);
    if (cell_dist[i] > r_lo && cell_dist[i] <= r_hi) candidates.push_back(cell_dist[i]);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const auto& dirs = stencil.directions();
  const bool periodic = g.boundary_mode() == BoundaryMode::periodic;
  const int w = g.width(), ht = g.height();
  const auto added_at = [&](double R) {
    double added = 0.0;
    for (int i = 0; i < geo.count; ++i) {
      if (cell_dist[i] > R) continue;
      const Cell c = geo.cells[i];
      for (const auto& d : dirs) {
        Cell nb{c.x + d.dx, c.y + d.dy};
        if (periodic) {
          nb = Cell{(nb.x % w + w) % w, (nb.y % ht + ht) % ht};
          if (nb.x == c.x && nb.y == c.y) continue;
        } else if (nb.x < 0 || nb.x >= w || nb.y < 0 || nb.y >= ht) {
          continue;  // lattice edge: already cut in the source set
        }
        if (!set.contains(nb)) continue;
        if (dist.to_cell(nb) <= R) continue;
        added += d.weight * cut_pair_phi(g, c, d.dx, d.dy) * g.spacing();
      }
    }
    return added;
  };

  CoareaSelection sel;
  bool first = true;
  for (double R : candidates) {
    const double added = added_at(R);
    if (first || added < sel.best_slack) {
      sel.best_slack = added;
      sel.radius = R;
      sel.added_perimeter = added;
    }
    first = false;
    if (added <= budget + 1e-12) {
      sel.ok = true;
      sel.radius = R;
      sel.added_perimeter = added;
      return sel;
    }
  }
  return sel;  // ok=false; radius/added hold the least-damage radius found
}

namespace {

IndicatorSet cut_trace(const ConformalGrid& g, const SetGeometry& geo, const DistanceOracle& dist,
                       double R) {
  std::vector<Cell> cells;
  for (int i = 0; i < geo.count; ++i)
    if (dist.to_cell(geo.cells[i]) <= R) cells.push_back(geo.cells[i]);
  return IndicatorSet::from_cells(g, cells);
}

template <typename T>
void subselect(std::vector<T>& v, const std::vector<int>& keep) {
  std::vector<T> out;
  out.reserve(keep.size());
  for (int i : keep) out.push_back(std::move(v[i]));
  v = std::move(out);
}

void restrict_piece(Piece& p, const std::vector<int>& keep) {
  subselect(p.centers, keep);
  subselect(p.radii, keep);
  subselect(p.trace, keep);
  subselect(p.budgets, keep);
  subselect(p.added_perimeter, keep);
  subselect(p.source_volume, keep);
  subselect(p.source_perimeter, keep);
  subselect(p.source_q1, keep);
}

}  // namespace

ExtractResult extract_piece(const SetSequence& seq, std::span<const double> budget_schedule,
                            const PerimeterStencil& stencil, const ExtractParams& params) {
  const int J = seq.length();
  const double h = seq.spacing();
  if (static_cast<int>(budget_schedule.size()) < J)
    throw std::invalid_argument("extract_piece: budget schedule shorter than the sequence");
  const double base = params.base_radius > 0.0 ? params.base_radius : 8.0 * h;

  Piece piece;
  std::vector<int> retained;
  std::vector<SequenceTerm> residual_terms;

  double working = base;
  double prev_radius = 0.0;
  int j_prev = -1;
  int k = 0;
  while (j_prev < J - 1) {
    const double r_eval = std::max(working, prev_radius);
    int chosen = -1;
    ConcentrationPoint chosen_sup;
    SetGeometry chosen_geo;
    // Forward scan for the earliest index whose arg-max ball is moat-isolated,
    // so the cut there is free; this is the subsequence the proof passes to.
    for (int j = j_prev + 1; j < J; ++j) {
      const SequenceTerm& term = seq.terms()[j];
      SetGeometry geo = make_geometry(term.grid, term.set);
      const ConcentrationPoint sup = sup_over_centers(term.grid, geo, r_eval);
      if (geo.count == 0) {
        chosen = j;
        chosen_sup = sup;
        chosen_geo = std::move(geo);
        break;
      }
      const double moat = 3.0 * h * term.grid.max_phi();
      const DistanceOracle dist(term.grid, sup.center, r_eval + moat);
      if (set_within(geo, dist, r_eval + moat).count == set_within(geo, dist, r_eval).count) {
        chosen = j;
        chosen_sup = sup;
        chosen_geo = std::move(geo);
        break;
      }
    }
    if (chosen < 0) {  // nothing isolates; take the last index and pay the cut
      chosen = J - 1;
      const SequenceTerm& term = seq.terms()[chosen];
      chosen_geo = make_geometry(term.grid, term.set);
      chosen_sup = sup_over_centers(term.grid, chosen_geo, r_eval);
    }

    const SequenceTerm& term = seq.terms()[chosen];
    const double moat = 3.0 * h * term.grid.max_phi();
    const double budget = budget_schedule[k];
    const double r_lo = r_eval;
    const double r_hi = r_lo + moat + 2.0 * h * (k + 1);
    const CoareaSelection sel =
        select_radius_coarea(term.grid, term.set, chosen_sup.center, r_lo, r_hi, budget, stencil);

    const DistanceOracle dist(term.grid, chosen_sup.center, sel.radius);
    IndicatorSet trace = cut_trace(term.grid, chosen_geo, dist, sel.radius);
    IndicatorSet residual = set_minus(term.grid, term.set, trace);

    piece.centers.push_back(chosen_sup.center);
    piece.radii.push_back(sel.radius);
    piece.budgets.push_back(budget);
    piece.added_perimeter.push_back(sel.added_perimeter);
    piece.source_volume.push_back(term.set.volume());
    piece.source_perimeter.push_back(perimeter(term.grid, term.set, stencil));
    piece.source_q1.push_back(sup_over_centers(term.grid, chosen_geo, 1.0).Q);
    piece.trace.push_back(std::move(trace));
    residual_terms.push_back(SequenceTerm{term.grid, std::move(residual)});
    retained.push_back(chosen);

    prev_radius = sel.radius;
    j_prev = chosen;
    working += std::max(1, k) * h;
    ++k;
  }

  const int window = std::min(params.tail_window, static_cast<int>(retained.size()));
  std::vector<double> vols, pers;
  for (std::size_t i = 0; i < piece.trace.size(); ++i) {
    vols.push_back(piece.trace[i].volume());
    pers.push_back(perimeter(residual_terms[i].grid, piece.trace[i], stencil));
  }
  const TailStats vstats = tail_stats(vols, window);
  piece.v_i = vstats.mean;
  piece.tail_std = vstats.stddev;
  piece.A_i = tail_stats(pers, window).mean;

  ExtractResult result{std::move(piece),
                       SetSequence::with_measured_bounds(std::move(residual_terms), stencil),
                       std::move(retained)};
  return result;
}

Decomposition decompose(const SetSequence& seq, const PerimeterStencil& stencil,
                        const DecomposeParams& params) {
  const double v = seq.volume_bound();
  const double h = seq.spacing();
  const double stop =
      params.stop_threshold > 0.0 ? params.stop_threshold : std::max(1e-6, 1e-3 * v);

  Decomposition dec;
  dec.volume_bound = v;
  dec.perimeter_bound = seq.perimeter_bound();
  dec.stop_threshold = stop;

  std::vector<int> global(seq.length());
  for (int j = 0; j < seq.length(); ++j) global[j] = j;

  SetSequence current = seq;
  while (true) {
    const int window = std::min(params.tail_window, current.length());
    std::vector<double> vols;
    for (const auto& t : current.terms()) vols.push_back(t.set.volume());
    const double tail_vol = tail_stats(vols, window).mean;
    if (tail_vol < stop) break;
    if (static_cast<int>(dec.pieces.size()) >= params.max_pieces) {
      dec.incomplete = true;
      break;
    }

    std::vector<double> budgets(current.length());
    for (int k = 0; k < current.length(); ++k) budgets[k] = v / ((k + 1) * h);

    ExtractParams ep;
    ep.base_radius = params.base_radius;
    ep.tail_window = params.tail_window;
    ExtractResult res = extract_piece(current, budgets, stencil, ep);

    if (res.piece.v_i <= 1e-12) {
      // A ball around the best concentration point captured essentially
      // nothing despite the residual tail carrying volume: under bounded
      // geometry this cannot happen, so surface it as a diagnostic.
      dec.evanescence_diagnostic = true;
      dec.incomplete = true;
      break;
    }

    for (auto& p : dec.pieces) restrict_piece(p, res.subsequence);
    subselect(global, res.subsequence);
    dec.pieces.push_back(std::move(res.piece));
    current = std::move(res.residual);
  }

  const int K = current.length();
  const int window = std::min(params.tail_window, K);
  dec.tail_window = window;
  dec.subsequence = global;
  for (int j : global) dec.retained_terms.push_back(seq.terms()[j]);
  for (const auto& t : current.terms()) dec.leftover.push_back(t.set);

  std::vector<double> leftover_vols;
  for (const auto& s : dec.leftover) leftover_vols.push_back(s.volume());
  dec.residual_tail_volume = tail_stats(leftover_vols, window).mean;
  if (dec.residual_tail_volume >= stop) dec.incomplete = true;

  // Recompute piece tails on the final aligned subsequence so the totals and
  // the leftover refer to the same indices.
  dec.v_bar = 0.0;
  dec.A_bar = 0.0;
  for (auto& p : dec.pieces) {
    std::vector<double> vols, pers;
    for (std::size_t i = 0; i < p.trace.size(); ++i) {
      vols.push_back(p.trace[i].volume());
      pers.push_back(perimeter(dec.retained_terms[i].grid, p.trace[i], stencil));
    }
    const TailStats vstats = tail_stats(vols, window);
    p.v_i = vstats.mean;
    p.tail_std = vstats.stddev;
    p.A_i = tail_stats(pers, window).mean;
    dec.v_bar += p.v_i;
    dec.A_bar += p.A_i;
  }

  std::vector<double> cut_costs(K, 0.0);
  for (const auto& p : dec.pieces)
    for (int i = 0; i < K; ++i) cut_costs[i] += p.added_perimeter[i];
  for (double& c : cut_costs) c *= 2.0;  // both sides of every cut edge
  dec.slack = tail_stats(cut_costs, window).mean;
  return dec;
}

double nonevanescence_lower_bound(double vol, double per, double c_cal) {
  if (vol < 0.0 || per < 0.0) throw std::invalid_argument("nonevanescence bound needs nonnegative inputs");
  return c_cal * vol * vol / (per * per + 1.0);
}

double calibrate_nonevanescence(std::span<const Decomposition> decompositions) {
  double c = std::numeric_limits<double>::infinity();
  for (const auto& dec : decompositions) {
    for (const auto& p : dec.pieces) {
      for (std::size_t i = 0; i < p.source_volume.size(); ++i) {
        const double V = p.source_volume[i];
        if (V <= 0.0) continue;
        const double P = p.source_perimeter[i];
        c = std::min(c, p.source_q1[i] * (P * P + 1.0) / (V * V));
      }
    }
  }
  if (!std::isfinite(c)) return 0.0;
  return c;
}

NonevanescenceAudit audit_nonevanescence(std::span<const Decomposition> decompositions, double c_cal) {
  NonevanescenceAudit audit;
  audit.c_cal = c_cal;
  audit.worst_margin = std::numeric_limits<double>::infinity();
  bool all = true;
  for (const auto& dec : decompositions) {
    for (const auto& p : dec.pieces) {
      for (std::size_t i = 0; i < p.trace.size(); ++i) {
        if (p.source_volume[i] <= 0.0) continue;
        const double bound =
            nonevanescence_lower_bound(p.source_volume[i], p.source_perimeter[i], c_cal);
        const double margin = p.trace[i].volume() - bound;
        audit.worst_margin = std::min(audit.worst_margin, margin);
        ++audit.checks;
        if (margin < -1e-9) all = false;
      }
    }
  }
  if (audit.checks == 0) audit.worst_margin = 0.0;
  audit.pass = all && audit.checks > 0;
  return audit;
}

std::pair<IndicatorSet, std::vector<int>> extract_constant_subsequence(
    std::span<const IndicatorSet> sets) {
  if (sets.empty()) throw std::invalid_argument("extract_constant_subsequence: empty input");
  for (const auto& s : sets)
    if (s.grid_id() != sets.front().grid_id())
      throw std::invalid_argument("extract_constant_subsequence: sets live on different grids");
  // Key by serialized form; the tie rule wants the smallest one.
  std::map<std::string, std::vector<int>> groups;
  for (std::size_t i = 0; i < sets.size(); ++i)
    groups[set_to_string(sets[i])].push_back(static_cast<int>(i));
  const std::vector<int>* best = nullptr;
  const std::string* best_key = nullptr;
  for (const auto& [key, indices] : groups) {
    if (!best || indices.size() > best->size()) {  // map order breaks ties by smallest key
      best = &indices;
      best_key = &key;
    }
  }
  (void)best_key;
  return {sets[(*best)[0]], *best};
}

std::vector<CorpusSequence> generate_corpus(const CorpusParams& params,
                                            const PerimeterStencil& stencil) {
  if (params.sequences < 1 || params.length < 2)
    throw std::invalid_argument("corpus needs at least one sequence of length >= 2");
  std::vector<CorpusSequence> corpus;
  corpus.reserve(params.sequences);
  const int J = params.length;

  for (int s = 0; s < params.sequences; ++s) {
    std::mt19937_64 rng(params.seed + static_cast<std::uint64_t>(s) * 0x9e3779b97f4a7c15ull);
    const int clusters = 1 + static_cast<int>(rng() % 5);
    const int flip = rng() % 2 == 0 ? 1 : -1;  // mirror all drift, keeps separations

    // Clusters sit on slot centers 40 cells apart with slot-assigned drifts
    // (adjacent slots separate by 2 cells per index), so working balls never
    // reach a neighbor cluster along the whole radius schedule.
    struct Block {
      int x, y, w, h, vx, vy;
    };
    std::vector<Block> blocks;
    for (int c = 0; c < clusters; ++c) {
      Block b;
      const int sx = c % 3, sy = c / 3;
      b.w = 2 + static_cast<int>(rng() % 3);
      b.h = 2 + static_cast<int>(rng() % 3);
      b.x = 24 + 40 * sx + static_cast<int>(rng() % 13) - 6;
      b.y = 56 + 40 * sy + static_cast<int>(rng() % 13) - 6;
      b.vx = flip * 2 * (sx - 1);  // -2, 0, +2 cells per index
      b.vy = sy;                   // 0 or +1
      blocks.push_back(b);
    }

    // Dust: isolated single cells in a band far below the cluster field, out
    // of reach of every working ball; half of them vanish mid-sequence.
    struct Dust {
      int x, y, vx;
      bool vanishing;
    };
    std::vector<Dust> dust;
    if (rng() % 2 == 0) {
      const int n = 1 + static_cast<int>(rng() % 2);
      for (int d = 0; d < n; ++d) {
        Dust sp;
        sp.x = 24 + static_cast<int>(rng() % 16) + 48 * d;
        sp.y = 6;
        sp.vx = static_cast<int>(rng() % 5) - 2;
        sp.vanishing = rng() % 2 == 0;
        dust.push_back(sp);
      }
    }

    int maxx = 0, maxy = 0;
    for (const auto& b : blocks) {
      maxx = std::max(maxx, b.x + b.w + std::abs(b.vx) * (J - 1));
      maxy = std::max(maxy, b.y + b.h + std::abs(b.vy) * (J - 1));
    }
    for (const auto& d : dust) maxx = std::max(maxx, d.x + 1 + std::abs(d.vx) * (J - 1));
    const int width = maxx + 12, height = std::max(maxy + 12, 40);
    const ConformalGrid grid = ConformalGrid::flat(width, height, params.h, BoundaryMode::open);

    std::vector<SequenceTerm> terms;
    for (int j = 0; j < J; ++j) {
      std::vector<Cell> cells;
      for (const auto& b : blocks) {
        const int bx = std::clamp(b.x + b.vx * j, 1, width - b.w - 1);
        const int by = std::clamp(b.y + b.vy * j, 1, height - b.h - 1);
        for (int dy = 0; dy < b.h; ++dy)
          for (int dx = 0; dx < b.w; ++dx) cells.push_back(Cell{bx + dx, by + dy});
      }
      for (const auto& d : dust) {
        if (d.vanishing && j >= J / 2) continue;
        const int dx = std::clamp(d.x + d.vx * j, 1, width - 2);
        cells.push_back(Cell{dx, d.y});
      }
      terms.push_back(SequenceTerm{grid, IndicatorSet::from_cells(grid, cells)});
    }

    CorpusSequence cs{SetSequence::with_measured_bounds(std::move(terms), stencil), false, clusters};
    bool constant = true;
    const double v0 = cs.sequence.terms().front().set.volume();
    for (const auto& t : cs.sequence.terms())
      if (std::abs(t.set.volume() - v0) > 1e-9) constant = false;
    cs.constant_volume = constant;
    corpus.push_back(std::move(cs));
  }
  return corpus;
}

}  // namespace isolab
