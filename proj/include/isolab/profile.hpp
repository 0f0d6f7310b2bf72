#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isolab/manifold.hpp"
#include "isolab/perimeter.hpp"

namespace isolab {

// One sampled point of the isoperimetric profile: the least boundary measure
// found among sets whose volume hits the target within the method's window.
struct ProfilePoint {
  double v = 0.0;    // requested volume
  double I_v = 0.0;  // perimeter of the best set found
  std::optional<IndicatorSet> achiever;
  std::string method;           // "oracle" | "lagrangian" | "anneal"
  bool achieved = true;         // false when the minimizer hugs an open wall
  double volume_error = 0.0;    // |volume(achiever) - v|
};

struct ProfileCurve {
  std::vector<ProfilePoint> points;  // sorted by v, strictly increasing
  std::uint64_t grid_id = 0;
  StencilKind stencil = StencilKind::cut4;
};

// Exhaustive minimum over all 2^n subsets; the reference the other two
// methods are judged against. Targets are met within half the largest cell
// volume. Rejects grids with more than 20 cells.
ProfileCurve brute_force_profile(const ConformalGrid& g, std::span<const double> volumes,
                                 const PerimeterStencil& stencil);

// For each lambda, minimizes perimeter(S) - lambda * volume(S) exactly as a
// minimum cut (source->cell arcs carry lambda * cell volume, cell->sink arcs
// carry the open-wall cost, cell<->cell arcs carry the metric edge weights).
// Every returned point is feasible and exact: v and I_v are recomputed from
// the extracted set. The points lie on the lower convex envelope of the true
// profile; concave stretches are invisible to this method.
ProfileCurve lagrangian_cut_profile(const ConformalGrid& g, std::span<const double> lambda_schedule,
                                    const PerimeterStencil& stencil);

// Parametric search for the full breakpoint set of the lambda relaxation:
// recursively probes the intersection of neighboring optimum lines until no
// new optimum appears between them. Feeding the result to
// lagrangian_cut_profile recovers every envelope vertex.
std::vector<double> breakpoint_lambda_schedule(const ConformalGrid& g, const PerimeterStencil& stencil);

struct AnnealSchedule {
  int max_iterations = 100000;  // total move budget across restarts
  int restarts = 3;
  double cooling = 0.995;
  double t0 = 0.0;  // 0 -> mean single-edge cut cost of the grid
  int guard_band_cells = 1;
  double volume_window = 0.0;  // 0 -> one (largest) cell volume
};

// Stochastic upper bound: greedy fill to the target volume, then
// Metropolis-accepted add/remove/swap moves constrained to the volume
// window. Deterministic for a fixed seed. On open grids the point is
// flagged not-achieved when the best set touches the wall guard band —
// the finite-grid proxy for a minimizing sequence escaping to infinity.
ProfilePoint annealed_profile_point(const ConformalGrid& g, double v, const PerimeterStencil& stencil,
                                    const AnnealSchedule& schedule, std::uint64_t seed,
                                    const IndicatorSet* warm_start = nullptr);

// Chains annealed points over ascending targets, warm-starting each from the
// previous achiever.
ProfileCurve annealed_profile_curve(const ConformalGrid& g, std::span<const double> volumes,
                                    const PerimeterStencil& stencil, const AnnealSchedule& schedule,
                                    std::uint64_t seed);

struct ContinuityReport {
  double max_jump = 0.0;          // max |I(v_{i+1}) - I(v_i)|
  int max_jump_index = -1;        // left index of the worst gap
  double max_modulus_ratio = 0.0; // max jump / sqrt(v_{i+1} - v_i)
  double tolerance = 0.0;
  bool flagged = false;           // true when some jump exceeds the tolerance
};

// Scans adjacent gaps of a sorted curve (>= 3 points) and flags any jump
// above `jump_tolerance`.
ContinuityReport profile_continuity_report(const ProfileCurve& curve, double jump_tolerance);

// CSV with header v,I_v,method,achieved,volume_error; shortest round-trip
// floats, LF newlines.
std::string profile_curve_csv(const ProfileCurve& curve);

}  // namespace isolab
