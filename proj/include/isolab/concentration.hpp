#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "isolab/manifold.hpp"
#include "isolab/perimeter.hpp"

namespace isolab {

// One term of a set sequence. Grids may differ (and grow) across indices to
// model configurations drifting off to infinity at desk scale.
struct SequenceTerm {
  ConformalGrid grid;
  IndicatorSet set;
};

// A sequence of finite-perimeter sets under uniform volume and perimeter
// bounds; both bounds are checked term by term at construction. All terms
// must share the grid spacing so radius schedules mean the same thing at
// every index.
class SetSequence {
 public:
  SetSequence(std::vector<SequenceTerm> terms, double volume_bound, double perimeter_bound,
              const PerimeterStencil& stencil);
  static SetSequence with_measured_bounds(std::vector<SequenceTerm> terms,
                                          const PerimeterStencil& stencil);

  const std::vector<SequenceTerm>& terms() const { return terms_; }
  int length() const { return static_cast<int>(terms_.size()); }
  double volume_bound() const { return volume_bound_; }
  double perimeter_bound() const { return perimeter_bound_; }
  double spacing() const { return spacing_; }

 private:
  std::vector<SequenceTerm> terms_;
  double volume_bound_ = 0.0;
  double perimeter_bound_ = 0.0;
  double spacing_ = 0.0;
};

struct ConcentrationPoint {
  double Q = 0.0;  // sup over centers of the volume a radius-R ball captures
  Vertex center{0, 0};
};

// Q(R) with its arg-max center; ties resolve to the lexicographically
// smallest (x, y). Centers range over all distinct grid vertices.
ConcentrationPoint concentration_sup(const ConformalGrid& g, const IndicatorSet& set, double R);

// Q sampled on an ascending radius list.
std::vector<std::pair<double, double>> concentration_function(const ConformalGrid& g,
                                                              const IndicatorSet& set,
                                                              std::span<const double> radii);

struct CoareaSelection {
  bool ok = false;
  double radius = 0.0;           // smallest qualifying radius (or best-effort radius)
  double added_perimeter = 0.0;  // cut cost at `radius`
  double best_slack = 0.0;       // least cut cost seen during the sweep
};

// Sweeps the distinct anchor distances in [r_lo, r_hi] around `center` and
// returns the smallest radius whose ball cut crosses at most `budget` of
// perimeter (edges from set cells inside the ball to set cells outside).
// When no radius qualifies, ok=false and the best radius found is reported.
CoareaSelection select_radius_coarea(const ConformalGrid& g, const IndicatorSet& set, Vertex center,
                                     double r_lo, double r_hi, double budget,
                                     const PerimeterStencil& stencil);

// One concentration piece: per retained index, the ball cut around the
// drifting center, plus the numbers needed to audit the extraction
// afterwards (cut budgets, actual cut costs, and the source term's volume,
// perimeter, and unit-ball concentration).
struct Piece {
  std::vector<Vertex> centers;
  std::vector<double> radii;  // nondecreasing by construction
  std::vector<IndicatorSet> trace;
  std::vector<double> budgets;
  std::vector<double> added_perimeter;
  std::vector<double> source_volume;
  std::vector<double> source_perimeter;
  std::vector<double> source_q1;
  double v_i = 0.0;       // tail-mean captured volume
  double A_i = 0.0;       // tail-mean captured perimeter
  double tail_std = 0.0;  // stddev of the captured volume over the tail
};

struct ExtractParams {
  double base_radius = 0.0;  // 0 -> 8 * spacing
  int tail_window = 5;
};

struct ExtractResult {
  Piece piece;
  SetSequence residual;          // same retained indices, ball cuts removed
  std::vector<int> subsequence;  // retained positions in the input sequence
};

// One round of piece extraction. Working radii grow along retained indices
// (R_{k+1} = R_k + max(1,k)*h). For each retained position the engine scans
// forward for the earliest input index whose arg-max ball is surrounded by
// an empty moat (so the cut is free); when no index qualifies it falls back
// to the last index and lets the coarea sweep pay the budgeted cut. This is
// the finite stand-in for passing to a subsequence along which the captured
// volume stabilizes.
ExtractResult extract_piece(const SetSequence& seq, std::span<const double> budget_schedule,
                            const PerimeterStencil& stencil, const ExtractParams& params = {});

struct DecomposeParams {
  int max_pieces = 64;
  int tail_window = 5;
  double stop_threshold = 0.0;  // 0 -> max(1e-6, 1e-3 * volume_bound)
  double base_radius = 0.0;     // 0 -> 8 * spacing
};

// The full decomposition: pieces aligned index-by-index on the final
// retained subsequence, the per-index leftover, and the audited totals.
struct Decomposition {
  std::vector<Piece> pieces;
  std::vector<IndicatorSet> leftover;       // per retained index
  std::vector<int> subsequence;             // original indices retained
  std::vector<SequenceTerm> retained_terms; // input terms at those indices
  double v_bar = 0.0;                 // sum of piece tail volumes
  double A_bar = 0.0;                 // sum of piece tail perimeters
  double slack = 0.0;                 // tail mean of 2 * (sum of cut costs per index)
  double residual_tail_volume = 0.0;  // tail mean of the leftover volume
  double volume_bound = 0.0;
  double perimeter_bound = 0.0;
  double stop_threshold = 0.0;
  int tail_window = 0;
  bool incomplete = false;              // piece cap hit with residual above threshold
  bool evanescence_diagnostic = false;  // an extraction captured (essentially) nothing
};

Decomposition decompose(const SetSequence& seq, const PerimeterStencil& stencil,
                        const DecomposeParams& params = {});

// The audit floor c * vol^2 / (per^2 + 1).
double nonevanescence_lower_bound(double vol, double per, double c_cal);

// Largest constant c such that every extraction source term swept satisfies
// Q(1) >= c * V^2 / (P^2 + 1). Sweeps every piece of every decomposition
// (piece 1's sources are the original terms, later pieces' the residuals).
double calibrate_nonevanescence(std::span<const Decomposition> decompositions);

struct NonevanescenceAudit {
  double c_cal = 0.0;
  bool pass = false;
  double worst_margin = 0.0;  // min over checks of captured - bound
  int checks = 0;
};

// Verifies, per piece and per retained index, that the captured volume
// clears the calibrated lower bound evaluated on its source term.
NonevanescenceAudit audit_nonevanescence(std::span<const Decomposition> decompositions, double c_cal);

// Pigeonhole compactness for sets confined to one fixed region: returns the
// most recurrent set and its index list; ties resolve to the smallest
// serialized form. All sets must live on the same grid.
std::pair<IndicatorSet, std::vector<int>> extract_constant_subsequence(
    std::span<const IndicatorSet> sets);

// Randomized sequence generator for the property corpus: 1..5 block
// clusters with per-index drift 0..2 cells, optional vanishing dust.
struct CorpusParams {
  int sequences = 50;
  int length = 8;  // keeps every working radius below the slot separation
  double h = 1.0;
  std::uint64_t seed = 1;
};

struct CorpusSequence {
  SetSequence sequence;
  bool constant_volume = false;  // per-index volume identical across the sequence
  int cluster_count = 0;
};

std::vector<CorpusSequence> generate_corpus(const CorpusParams& params,
                                            const PerimeterStencil& stencil);

}  // namespace isolab
