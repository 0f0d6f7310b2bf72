#include "isolab/limits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>

#include "isolab/util.hpp"

namespace isolab {

std::vector<std::vector<int>> cluster_diverging_tracks(std::span<const SequenceTerm> terms,
                                                       const std::vector<std::vector<Vertex>>& tracks,
                                                       double threshold, int tail_window) {
  const int n = static_cast<int>(tracks.size());
  const int J = static_cast<int>(terms.size());
  for (const auto& t : tracks)
    if (static_cast<int>(t.size()) != J)
      throw std::invalid_argument("cluster_diverging_tracks: tracks must match the sequence length");
  if (threshold < 0.0) throw std::invalid_argument("cluster_diverging_tracks: negative threshold");

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const std::function<int(int)> find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };

  const int tail = std::min(tail_window, J);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      bool close = true;
      for (int j = J - tail; j < J && close; ++j)
        close = terms[j].grid.geodesic_distance(tracks[a][j], tracks[b][j]) <= threshold;
      if (close) parent[find(a)] = find(b);
    }
  }

  std::vector<std::vector<int>> blocks;
  std::vector<int> block_of(n, -1);
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (block_of[r] < 0) {
      block_of[r] = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    blocks[block_of[r]].push_back(i);
  }
  return blocks;
}

namespace {

struct DetectionAttempt {
  ConformalGrid chart;
  bool snapped = false;
  std::vector<double> residuals;
  bool ok = false;
  double worst_tail = 0.0;
};

DetectionAttempt attempt_detection(std::span<const SequenceTerm> terms,
                                   const std::vector<Vertex>& track,
                                   const std::vector<int>& indices, int rc, double window_radius,
                                   double tol, int tail_window) {
  const double h = terms.front().grid.spacing();
  const int last = indices.back();
  ConformalGrid chart = subgrid_window(terms[last].grid, track[last], rc);
  bool snapped = false;
  if (chart.max_phi() - 1.0 <= tol && 1.0 - chart.min_phi() <= tol && !chart.is_flat()) {
    chart = ConformalGrid::flat(2 * rc, 2 * rc, h, BoundaryMode::open);
    snapped = true;
  }
  const Vertex anchor{rc, rc};
  std::vector<double> residuals;
  residuals.reserve(indices.size());
  for (int idx : indices)
    residuals.push_back(
        recentered_metric_difference(terms[idx].grid, track[idx], chart, anchor, window_radius));

  const int n = static_cast<int>(residuals.size());
  const int tail = std::min(tail_window, n);
  bool ok = true;
  double worst = 0.0;
  for (int i = n - tail; i < n; ++i) {
    worst = std::max(worst, residuals[i]);
    if (residuals[i] > tol) ok = false;
    if (i > n - tail && residuals[i] > residuals[i - 1] + 1e-12) ok = false;  // not settling
  }
  return DetectionAttempt{std::move(chart), snapped, std::move(residuals), ok, worst};
}

}  // namespace

LimitManifold detect_limit_manifold(std::span<const SequenceTerm> terms,
                                    const std::vector<Vertex>& track, double window_radius,
                                    double tol, int source_piece, int tail_window) {
  if (terms.empty()) throw std::invalid_argument("detect_limit_manifold: empty sequence");
  if (track.size() != terms.size())
    throw std::invalid_argument("detect_limit_manifold: track length must match the sequence");
  if (tol < 0.0) throw std::invalid_argument("detect_limit_manifold: negative tolerance");
  const double h = terms.front().grid.spacing();
  const int rc = static_cast<int>(std::floor(window_radius / h + 1e-9));
  if (rc < 1) throw std::invalid_argument("detect_limit_manifold: window must span at least one cell");

  std::vector<int> all(terms.size());
  std::iota(all.begin(), all.end(), 0);
  DetectionAttempt first = attempt_detection(terms, track, all, rc, window_radius, tol, tail_window);
  std::vector<int> used = all;
  DetectionAttempt* result = &first;

  std::optional<DetectionAttempt> second;
  if (!first.ok && all.size() >= 4) {
    // Retry on the half of the indices with the smallest residuals: the
    // convergence is only guaranteed along a subsequence.
    std::vector<int> order = all;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return first.residuals[a] != first.residuals[b] ? first.residuals[a] < first.residuals[b]
                                                      : a < b;
    });
    std::vector<int> half(order.begin(), order.begin() + (order.size() + 1) / 2);
    std::sort(half.begin(), half.end());
    second = attempt_detection(terms, track, half, rc, window_radius, tol, tail_window);
    if (second->ok) {
      used = half;
      result = &*second;
    }
  }
  if (!result->ok) {
    throw std::runtime_error("limit detection failed: worst tail residual " +
                             format_double(result->worst_tail) + " exceeds tolerance " +
                             format_double(tol));
  }

  return LimitManifold{std::move(result->chart),
                       source_piece,
                       track,
                       std::move(used),
                       std::move(result->residuals),
                       result->snapped,
                       window_radius,
                       tol};
}

namespace {

bool track_is_bounded(const std::vector<Vertex>& track, int tail_window, double drift_cells) {
  const int K = static_cast<int>(track.size());
  const int tail = std::min(tail_window, K);
  const Vertex last = track.back();
  for (int j = K - tail; j < K; ++j) {
    const int d = std::max(std::abs(track[j].x - last.x), std::abs(track[j].y - last.y));
    if (d > drift_cells) return false;
  }
  return true;
}

IndicatorSet recenter_into(const ConformalGrid& target, const IndicatorSet& src, Vertex src_anchor,
                           Vertex dst_anchor, const ConformalGrid& src_grid, double* lost_volume) {
  std::vector<Cell> cells;
  double lost = 0.0;
  src.for_each_cell([&](Cell c) {
    const Cell moved{c.x - src_anchor.x + dst_anchor.x, c.y - src_anchor.y + dst_anchor.y};
    if (target.cell_in_range(moved)) {
      cells.push_back(moved);
    } else {
      lost += src_grid.cell_volume(c);
    }
  });
  if (lost_volume) *lost_volume = lost;
  return IndicatorSet::from_cells(target, cells);
}

}  // namespace

std::vector<Vertex> piece_anchor_track(const Piece& piece) {
  const int K = static_cast<int>(piece.trace.size());
  std::vector<Vertex> anchors(K, Vertex{0, 0});
  std::vector<bool> has(K, false);
  for (int k = 0; k < K; ++k) {
    bool found = false;
    Cell first{0, 0};
    piece.trace[k].for_each_cell([&](Cell c) {
      if (!found) {
        first = c;
        found = true;
      }
    });
    if (found) {
      anchors[k] = Vertex{first.x, first.y};
      has[k] = true;
    }
  }
  int prev = -1;
  for (int k = 0; k < K; ++k) {
    if (has[k]) {
      prev = k;
      continue;
    }
    if (prev >= 0) {
      anchors[k] = anchors[prev];
      has[k] = true;
    }
  }
  int next = -1;
  for (int k = K - 1; k >= 0; --k) {
    if (has[k]) {
      next = k;
      continue;
    }
    if (next >= 0) anchors[k] = anchors[next];
  }
  return anchors;
}

GeneralizedRegion assemble_generalized_region(const Decomposition& dec,
                                              std::span<const LimitManifold> limits,
                                              const PerimeterStencil& stencil,
                                              const AssembleParams& params) {
  if (dec.retained_terms.empty())
    throw std::invalid_argument("assemble_generalized_region: decomposition retains no terms");
  std::vector<int> limit_of(dec.pieces.size(), -1);
  for (std::size_t li = 0; li < limits.size(); ++li) {
    const int p = limits[li].source_piece;
    if (p < 0 || p >= static_cast<int>(dec.pieces.size()))
      throw std::invalid_argument("assemble_generalized_region: limit manifold names no piece");
    if (limit_of[p] >= 0)
      throw std::invalid_argument("assemble_generalized_region: two limits claim piece " +
                                  std::to_string(p));
    limit_of[p] = static_cast<int>(li);
  }

  const ConformalGrid& base = dec.retained_terms.back().grid;
  GeneralizedRegion region;
  for (std::size_t i = 0; i < dec.pieces.size(); ++i) {
    const Piece& piece = dec.pieces[i];
    const std::vector<Vertex> anchors = piece_anchor_track(piece);
    std::optional<RegionComponent> comp;
    if (limit_of[i] >= 0) {
      const LimitManifold& lm = limits[limit_of[i]];
      const int rc = lm.chart.width() / 2;
      double lost = 0.0;
      IndicatorSet moved = recenter_into(lm.chart, piece.trace.back(), anchors.back(),
                                         Vertex{rc, rc}, base, &lost);
      if (lost > 0.0)
        throw std::invalid_argument("assemble_generalized_region: piece " + std::to_string(i) +
                                    " does not fit its limit chart window");
      comp.emplace(RegionComponent{static_cast<int>(i), false, limit_of[i], lm.chart,
                                   std::move(moved), 0.0, 0.0});
    } else if (track_is_bounded(anchors, params.tail_window, params.bounded_drift_cells)) {
      comp.emplace(
          RegionComponent{static_cast<int>(i), true, -1, base, piece.trace.back(), 0.0, 0.0});
    } else {
      throw std::invalid_argument("assemble_generalized_region: piece " + std::to_string(i) +
                                  " has a diverging track but no detected limit manifold");
    }
    comp->volume = comp->set.volume();
    comp->perimeter = perimeter(comp->manifold, comp->set, stencil);
    region.total_volume += comp->volume;
    region.total_perimeter += comp->perimeter;
    region.components.push_back(std::move(*comp));
  }
  return region;
}

ConvergenceReport check_multipointed_convergence(const Decomposition& dec,
                                                 const GeneralizedRegion& region,
                                                 const PerimeterStencil& stencil,
                                                 const ConvergenceParams& params) {
  if (region.components.size() != dec.pieces.size())
    throw std::invalid_argument(
        "check_multipointed_convergence: component and piece counts differ");
  const int K = static_cast<int>(dec.retained_terms.size());
  if (K == 0) throw std::invalid_argument("check_multipointed_convergence: empty decomposition");
  const double h = dec.retained_terms.front().grid.spacing();
  const int tail = std::min(params.tail_window, K);

  ConvergenceReport report;
  report.tolerance = params.tol;
  report.pass = true;

  for (std::size_t i = 0; i < dec.pieces.size(); ++i) {
    const Piece& piece = dec.pieces[i];
    const std::vector<Vertex> anchors = piece_anchor_track(piece);
    const RegionComponent& comp = region.components[i];
    TrackConvergence tc;
    tc.piece = static_cast<int>(i);

    Vertex dst_anchor;
    double window;
    if (comp.on_base) {
      dst_anchor = anchors.back();
      window = params.window_radius > 0.0 ? params.window_radius : 8.0 * h;
    } else {
      const int rc = comp.manifold.width() / 2;
      dst_anchor = Vertex{rc, rc};
      window = params.window_radius > 0.0 ? params.window_radius : rc * h;
    }

    for (int j = 0; j < K; ++j) {
      const SequenceTerm& term = dec.retained_terms[j];
      double lost = 0.0;
      const IndicatorSet moved = recenter_into(comp.manifold, piece.trace[j], anchors[j],
                                               dst_anchor, term.grid, &lost);
      tc.l1_residuals.push_back(l1_distance(comp.manifold, moved, comp.set) + lost);
      tc.c0_residuals.push_back(recentered_metric_difference(term.grid, anchors[j],
                                                             comp.manifold, dst_anchor, window));
    }
    tc.tail_l1 = *std::max_element(tc.l1_residuals.end() - tail, tc.l1_residuals.end());
    tc.tail_c0 = *std::max_element(tc.c0_residuals.end() - tail, tc.c0_residuals.end());
    tc.pass = tc.tail_l1 <= params.tol && tc.tail_c0 <= params.tol;
    report.pass = report.pass && tc.pass;
    report.tracks.push_back(std::move(tc));
  }

  std::vector<double> vols, pers;
  for (const auto& term : dec.retained_terms) {
    vols.push_back(term.set.volume());
    pers.push_back(perimeter(term.grid, term.set, stencil));
  }
  report.tail_volume = tail_stats(vols, tail).mean;
  report.liminf_tail_perimeter = *std::min_element(pers.end() - tail, pers.end());
  report.lower_semicontinuity_pass =
      region.total_perimeter <= report.liminf_tail_perimeter + params.lsc_tol;
  report.volume_continuity_pass =
      std::abs(region.total_volume - report.tail_volume) <= params.volume_tol;
  return report;
}

PieceCountReport check_piece_count_bound(const Decomposition& dec, double v, double v_star) {
  if (!(v_star > 0.0)) throw std::invalid_argument("check_piece_count_bound: v_star must be positive");
  PieceCountReport report;
  report.pieces = static_cast<int>(dec.pieces.size());
  report.v = v;
  report.v_star = v_star;
  report.bound = static_cast<int>(std::floor(v / v_star)) + 1;
  report.pass = report.pieces <= report.bound;
  const int N = report.pieces;
  report.chain_lhs = v_star * (N - 1);
  report.chain_rhs = 0.0;
  for (int i = 0; i + 1 < N; ++i) report.chain_rhs += dec.pieces[i].v_i;
  report.chain_pass = N <= 1 || report.chain_lhs <= report.chain_rhs + 1e-9;
  return report;
}

UnionProfileReport profile_union_equality(const ConformalGrid& base,
                                          std::span<const ConformalGrid> charts,
                                          std::span<const double> volumes,
                                          const PerimeterStencil& stencil,
                                          const AnnealSchedule& schedule, std::uint64_t seed,
                                          double tolerance) {
  if (volumes.empty()) throw std::invalid_argument("profile_union_equality: no volumes");
  const double mesh = base.spacing() * base.spacing();
  double vmax = 0.0;
  for (double v : volumes) {
    if (v < 0.0) throw std::invalid_argument("profile_union_equality: negative volume");
    vmax = std::max(vmax, v);
  }
  const int units = static_cast<int>(std::llround(vmax / mesh));

  std::vector<double> mesh_volumes;
  for (int u = 1; u <= units; ++u) mesh_volumes.push_back(u * mesh);

  // The mesh rungs are only comparable across components if every annealed
  // point actually sits on its rung, so the volume window must stay under
  // half a mesh step (a looser window lets a rung borrow its neighbor's — or
  // the empty — minimizer).
  AnnealSchedule rung_schedule = schedule;
  if (rung_schedule.volume_window <= 0.0 || rung_schedule.volume_window > 0.5 * mesh)
    rung_schedule.volume_window = 0.5 * mesh;

  // Profile of each component on the shared mesh; index 0 is volume 0.
  const auto component_profile = [&](const ConformalGrid& g) {
    std::vector<double> prof(units + 1, 0.0);
    if (units == 0) return prof;
    const ProfileCurve curve = annealed_profile_curve(g, mesh_volumes, stencil, rung_schedule, seed);
    for (int u = 1; u <= units; ++u) prof[u] = curve.points[u - 1].I_v;
    return prof;
  };

  std::vector<double> best = component_profile(base);
  const std::vector<double> base_prof = best;
  for (const ConformalGrid& chart : charts) {
    const std::vector<double> cp = component_profile(chart);
    std::vector<double> next(units + 1, 0.0);
    for (int u = 0; u <= units; ++u) {
      double m = best[u];  // all of u stays on the previous components
      for (int s = 1; s <= u; ++s) m = std::min(m, best[u - s] + cp[s]);
      next[u] = m;
    }
    best = std::move(next);
  }

  UnionProfileReport report;
  report.tolerance = tolerance;
  report.max_ratio = 1.0;
  report.pass = true;
  for (double v : volumes) {
    const int u = static_cast<int>(std::llround(v / mesh));
    const double b = base_prof[u];
    const double w = best[u];
    report.volumes.push_back(u * mesh);
    report.base_profile.push_back(b);
    report.union_profile.push_back(w);
    double ratio = 1.0;
    if (b <= 1e-15 && w <= 1e-15) {
      ratio = 1.0;
    } else if (b <= 1e-15 || w <= 1e-15) {
      ratio = std::numeric_limits<double>::infinity();
    } else {
      ratio = std::max(b / w, w / b);
    }
    report.max_ratio = std::max(report.max_ratio, ratio);
  }
  report.pass = report.max_ratio <= 1.0 + tolerance;
  return report;
}

IsometryCheck check_eps_isometry(const std::function<Vertex(Vertex)>& map,
                                 const ConformalGrid& a, const ConformalGrid& b, double eps,
                                 std::span<const std::pair<Vertex, Vertex>> sample_pairs) {
  if (eps < 0.0) throw std::invalid_argument("check_eps_isometry: negative eps");
  IsometryCheck check;
  check.pass = true;
  for (const auto& [x, y] : sample_pairs) {
    const double da = a.geodesic_distance(x, y);
    const double db = b.geodesic_distance(map(x), map(y));
    ++check.pairs;
    const double slack = 1e-12 * (1.0 + da);
    if (db < (1.0 - eps) * da - slack || db > (1.0 + eps) * da + slack) check.pass = false;
    if (da > 0.0) check.max_distortion = std::max(check.max_distortion, std::abs(db - da) / da);
    else if (db > 0.0) check.pass = false;
  }
  return check;
}

}  // namespace isolab
