#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "isolab/concentration.hpp"
#include "isolab/manifold.hpp"
#include "isolab/perimeter.hpp"
#include "isolab/profile.hpp"

namespace isolab {

// Partition of per-index center tracks: two tracks share a block iff their
// per-index geodesic distance stays <= threshold over the whole tail.
// Merging is transitive; blocks are reported sorted by smallest member.
std::vector<std::vector<int>> cluster_diverging_tracks(std::span<const SequenceTerm> terms,
                                                       const std::vector<std::vector<Vertex>>& tracks,
                                                       double threshold, int tail_window = 5);

// The geometry a diverging track converges to: the recentered tail window,
// with the per-index sup-norm metric residuals against it.
struct LimitManifold {
  ConformalGrid chart;                // canonical recentered window
  int source_piece = -1;              // piece the track came from (caller-assigned)
  std::vector<Vertex> source_track;   // the full input track
  std::vector<int> retained;          // track indices the detection settled on
  std::vector<double> c0_residuals;   // per retained index, window vs chart
  bool snapped_flat = false;          // chart was within tol of flat everywhere
  double window_radius = 0.0;
  double tolerance = 0.0;
};

// Recenters every term's metric window on the track and requires the
// residuals against the tail window to be small and settling. A non-Cauchy
// tail triggers one retry on the half of the indices with the smallest
// consecutive residuals; failure after that throws, naming the worst
// residual. A chart within tol of flat is snapped to the exactly flat
// window so downstream comparisons are exact.
LimitManifold detect_limit_manifold(std::span<const SequenceTerm> terms,
                                    const std::vector<Vertex>& track, double window_radius,
                                    double tol, int source_piece = -1, int tail_window = 5);

// One component of a region on the disjoint union: a set on either the base
// grid (bounded track) or a detected limit chart (diverging track).
struct RegionComponent {
  int piece = -1;
  bool on_base = false;
  int limit_index = -1;  // index into the detected-limits list when not on base
  ConformalGrid manifold;
  IndicatorSet set;
  double volume = 0.0;
  double perimeter = 0.0;
};

struct GeneralizedRegion {
  std::vector<RegionComponent> components;
  double total_volume = 0.0;     // exact sum over components
  double total_perimeter = 0.0;  // exact sum; no cross-terms between manifolds
};

struct AssembleParams {
  int tail_window = 5;
  double bounded_drift_cells = 2.0;  // max tail wobble for a track to count as bounded
};

// Per-index anchor for recentering a piece: the first cell of its trace in
// row-major order. Ball centers make poor anchors (arg-max tie-breaking lets
// them wander as working radii grow); the trace corner moves with the mass.
// Indices with an empty trace inherit the nearest non-empty anchor.
std::vector<Vertex> piece_anchor_track(const Piece& piece);

// Maps each piece's final trace onto its manifold: bounded tracks stay on
// the final term's grid, diverging tracks recenter into their detected
// chart. A diverging piece with no supplied limit is an error naming the
// orphan piece.
GeneralizedRegion assemble_generalized_region(const Decomposition& dec,
                                              std::span<const LimitManifold> limits,
                                              const PerimeterStencil& stencil,
                                              const AssembleParams& params = {});

struct TrackConvergence {
  int piece = -1;
  std::vector<double> l1_residuals;  // recentered trace vs component set, per index
  std::vector<double> c0_residuals;  // recentered metric vs component manifold
  double tail_l1 = 0.0;              // max over the tail
  double tail_c0 = 0.0;
  bool pass = false;
};

struct ConvergenceParams {
  double tol = 1e-9;           // residual tail tolerance
  double lsc_tol = 1e-9;       // slack for the lower-semicontinuity audit
  double volume_tol = 1e-9;    // slack for the volume-continuity audit
  double window_radius = 0.0;  // metric window; 0 -> per-component chart radius (8h on base)
  int tail_window = 5;
};

struct ConvergenceReport {
  std::vector<TrackConvergence> tracks;
  double tolerance = 0.0;
  bool pass = false;  // every track's residual tails within tolerance
  double liminf_tail_perimeter = 0.0;  // min over the tail of P(full set)
  double tail_volume = 0.0;            // mean over the tail of V(full set)
  bool lower_semicontinuity_pass = false;  // region perimeter <= liminf + lsc_tol
  bool volume_continuity_pass = false;     // region volume == tail volume within volume_tol
};

// Convergence of the sequence to the assembled region, track by track:
// recentred traces approach the component sets in L1 and the recentred
// metric windows approach the component manifolds in sup norm.
ConvergenceReport check_multipointed_convergence(const Decomposition& dec,
                                                 const GeneralizedRegion& region,
                                                 const PerimeterStencil& stencil,
                                                 const ConvergenceParams& params = {});

struct PieceCountReport {
  int pieces = 0;
  int bound = 0;  // floor(v / v_star) + 1
  bool pass = false;
  double chain_lhs = 0.0;  // v_star * (N - 1)
  double chain_rhs = 0.0;  // sum of the first N-1 piece volumes
  bool chain_pass = false;
  double v = 0.0;
  double v_star = 0.0;
};

// N <= floor(v / v_star) + 1, plus the greedy-capture chain
// v_star * (N-1) <= v_1 + ... + v_{N-1} that proves it on almost
// minimizing scenarios.
PieceCountReport check_piece_count_bound(const Decomposition& dec, double v, double v_star);

struct UnionProfileReport {
  std::vector<double> volumes;
  std::vector<double> base_profile;
  std::vector<double> union_profile;  // best split of v across base + charts
  double max_ratio = 0.0;             // worst of base/union and union/base
  double tolerance = 0.0;
  bool pass = false;
};

// Profile equality between the base grid and the disjoint union of the base
// with its limit charts: the union profile may split the volume across
// components (minimized over a cell-volume mesh); both sides are annealed
// with the same schedule and seed.
UnionProfileReport profile_union_equality(const ConformalGrid& base,
                                          std::span<const ConformalGrid> charts,
                                          std::span<const double> volumes,
                                          const PerimeterStencil& stencil,
                                          const AnnealSchedule& schedule, std::uint64_t seed,
                                          double tolerance);

struct IsometryCheck {
  bool pass = false;
  double max_distortion = 0.0;  // max relative distance distortion over the pairs
  int pairs = 0;
};

// (1-eps) d_a(x,y) <= d_b(map x, map y) <= (1+eps) d_a(x,y) over the sampled
// vertex pairs.
IsometryCheck check_eps_isometry(const std::function<Vertex(Vertex)>& map,
                                 const ConformalGrid& a, const ConformalGrid& b, double eps,
                                 std::span<const std::pair<Vertex, Vertex>> sample_pairs);

}  // namespace isolab
