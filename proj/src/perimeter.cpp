#include "isolab/perimeter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace isolab {

namespace {

int wrap_mod(int a, int m) {
  int r = a % m;
  return r < 0 ? r + m : r;
}

void require_grid(const ConformalGrid& g, const IndicatorSet& s, const char* op) {
  if (s.grid_id() != g.id()) {
    throw std::invalid_argument(std::string(op) + ": set bound to a different grid");
  }
}

void require_pair(const IndicatorSet& a, const IndicatorSet& b, const char* op) {
  if (a.grid_id() != b.grid_id()) {
    throw std::invalid_argument(std::string(op) + ": sets bound to different grids");
  }
}

}  // namespace

IndicatorSet::IndicatorSet(const ConformalGrid& g, std::vector<std::uint64_t> words)
    : grid_id_(g.id()),
      width_(g.width()),
      height_(g.height()),
      words_(std::move(words)) {
  const std::size_t n = g.cell_count();
  const std::size_t want = (n + 63) / 64;
  if (words_.size() != want) {
    throw std::invalid_argument("IndicatorSet: word count does not match the grid");
  }
  if (n % 64 != 0 && !words_.empty()) {
    // Clear padding bits so equality and popcounts stay canonical.
    words_.back() &= (~0ull) >> (64 - (n % 64));
  }
  count_ = 0;
  for (std::uint64_t w : words_) count_ += __builtin_popcountll(w);
  volume_ = 0.0;
  for_each_cell([&](Cell c) { volume_ += g.cell_volume(c); });
}

IndicatorSet IndicatorSet::empty(const ConformalGrid& g) {
  return IndicatorSet(g, std::vector<std::uint64_t>((g.cell_count() + 63) / 64, 0));
}

IndicatorSet IndicatorSet::full(const ConformalGrid& g) {
  return IndicatorSet(g, std::vector<std::uint64_t>((g.cell_count() + 63) / 64, ~0ull));
}

IndicatorSet IndicatorSet::from_cells(const ConformalGrid& g, const std::vector<Cell>& cells) {
  std::vector<std::uint64_t> words((g.cell_count() + 63) / 64, 0);
  for (const Cell& c : cells) {
    if (!g.cell_in_range(c)) {
      throw std::invalid_argument("IndicatorSet: cell out of range");
    }
    Cell n = c;
    if (g.boundary_mode() == BoundaryMode::periodic) {
      n = Cell{wrap_mod(c.x, g.width()), wrap_mod(c.y, g.height())};
    }
    const std::size_t i = g.cell_index(n);
    words[i >> 6] |= 1ull << (i & 63);
  }
  return IndicatorSet(g, std::move(words));
}

IndicatorSet IndicatorSet::from_predicate(const ConformalGrid& g,
                                          const std::function<bool(Cell)>& pred) {
  std::vector<std::uint64_t> words((g.cell_count() + 63) / 64, 0);
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    if (pred(g.cell_at(i))) words[i >> 6] |= 1ull << (i & 63);
  }
  return IndicatorSet(g, std::move(words));
}

IndicatorSet IndicatorSet::from_words(const ConformalGrid& g,
                                      std::vector<std::uint64_t> words) {
  return IndicatorSet(g, std::move(words));
}

std::vector<Cell> IndicatorSet::cells() const {
  std::vector<Cell> out;
  out.reserve(count_);
  for_each_cell([&](Cell c) { out.push_back(c); });
  return out;
}

double IndicatorSet::recompute_volume(const ConformalGrid& g) const {
  require_grid(g, *this, "recompute_volume");
  double v = 0.0;
  for_each_cell([&](Cell c) { v += g.cell_volume(c); });
  return v;
}

bool IndicatorSet::volume_cache_consistent(const ConformalGrid& g) const {
  return recompute_volume(g) == volume_;
}

namespace {

IndicatorSet combine(const ConformalGrid& g, const IndicatorSet& a, const IndicatorSet& b,
                     std::uint64_t (*op)(std::uint64_t, std::uint64_t), const char* name) {
  require_grid(g, a, name);
  require_pair(a, b, name);
  std::vector<std::uint64_t> words(a.words().size());
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = op(a.words()[i], b.words()[i]);
  return IndicatorSet::from_words(g, std::move(words));
}

}  // namespace

IndicatorSet set_union(const ConformalGrid& g, const IndicatorSet& a, const IndicatorSet& b) {
  return combine(g, a, b, [](std::uint64_t x, std::uint64_t y) { return x | y; }, "set_union");
}

IndicatorSet set_intersect(const ConformalGrid& g, const IndicatorSet& a, const IndicatorSet& b) {
  return combine(g, a, b, [](std::uint64_t x, std::uint64_t y) { return x & y; }, "set_intersect");
}

IndicatorSet set_minus(const ConformalGrid& g, const IndicatorSet& a, const IndicatorSet& b) {
  return combine(g, a, b, [](std::uint64_t x, std::uint64_t y) { return x & ~y; }, "set_minus");
}

IndicatorSet set_symmetric_difference(const ConformalGrid& g, const IndicatorSet& a,
                                      const IndicatorSet& b) {
  return combine(g, a, b, [](std::uint64_t x, std::uint64_t y) { return x ^ y; },
                 "set_symmetric_difference");
}

IndicatorSet set_complement(const ConformalGrid& g, const IndicatorSet& a) {
  require_grid(g, a, "set_complement");
  std::vector<std::uint64_t> words(a.words().size());
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = ~a.words()[i];
  return IndicatorSet::from_words(g, std::move(words));
}

namespace {

// Direction families and integral-geometry weights. Each family's weight
// is dphi / (2 |e|) — the angular share it represents on the half-circle
// over the distance between its parallel lattice lines — then the whole
// set is rescaled so the straight-edge response is centered at 1 across
// orientations (the calibration constant, fixed once at library init).
std::vector<StencilDirection> build_weighted(const std::vector<std::pair<int, int>>& families) {
  struct Fam {
    int dx, dy;
    double ang;
    double len;
  };
  std::vector<Fam> fams;
  for (auto [dx, dy] : families) {
    double a = std::atan2(static_cast<double>(dy), static_cast<double>(dx));
    const double pi = 3.14159265358979323846;
    while (a < 0) a += pi;
    while (a >= pi) a -= pi;
    fams.push_back({dx, dy, a, std::hypot(static_cast<double>(dx), static_cast<double>(dy))});
  }
  std::sort(fams.begin(), fams.end(), [](const Fam& a, const Fam& b) { return a.ang < b.ang; });
  const double pi = 3.14159265358979323846;
  const int n = static_cast<int>(fams.size());
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const double prev = i > 0 ? fams[i - 1].ang : fams[n - 1].ang - pi;
    const double next = i + 1 < n ? fams[i + 1].ang : fams[0].ang + pi;
    w[i] = (next - prev) / 2.0 / (2.0 * fams[i].len);
  }
  // Straight-edge response per unit length at normal angle t.
  const auto response = [&](double t) {
    double f = 0.0;
    for (int i = 0; i < n; ++i) {
      f += w[i] * std::abs(fams[i].dx * std::cos(t) + fams[i].dy * std::sin(t));
    }
    return f;
  };
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  const int samples = 3600;
  for (int s = 0; s < samples; ++s) {
    const double f = response(s * pi / samples);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  const double scale = 2.0 / (lo + hi);
  std::vector<StencilDirection> dirs;
  for (int i = 0; i < n; ++i) {
    dirs.push_back({fams[i].dx, fams[i].dy, w[i] * scale});
    dirs.push_back({-fams[i].dx, -fams[i].dy, w[i] * scale});
  }
  return dirs;
}

}  // namespace

PerimeterStencil::PerimeterStencil(StencilKind kind, std::vector<StencilDirection> dirs)
    : kind_(kind), dirs_(std::move(dirs)) {
  for (const auto& d : dirs_) weight_sum_ += d.weight;
}

const PerimeterStencil& PerimeterStencil::get(StencilKind kind) {
  static const PerimeterStencil cut4_st(StencilKind::cut4,
                                        {{1, 0, 1.0}, {-1, 0, 1.0}, {0, 1, 1.0}, {0, -1, 1.0}});
  static const PerimeterStencil cut8_st(
      StencilKind::cut8, build_weighted({{1, 0}, {0, 1}, {1, 1}, {1, -1}}));
  static const PerimeterStencil crofton16_st(
      StencilKind::crofton16, build_weighted({{1, 0}, {0, 1}, {1, 1}, {1, -1},
                                              {2, 1}, {1, 2}, {2, -1}, {1, -2}}));
  switch (kind) {
    case StencilKind::cut4:
      return cut4_st;
    case StencilKind::cut8:
      return cut8_st;
    case StencilKind::crofton16:
      return crofton16_st;
  }
  throw std::invalid_argument("unknown stencil kind");
}

const char* stencil_name(StencilKind kind) {
  switch (kind) {
    case StencilKind::cut4:
      return "cut4";
    case StencilKind::cut8:
      return "cut8";
    case StencilKind::crofton16:
      return "crofton16";
  }
  return "?";
}

StencilKind stencil_from_name(const std::string& name) {
  if (name == "cut4") return StencilKind::cut4;
  if (name == "cut8") return StencilKind::cut8;
  if (name == "crofton16") return StencilKind::crofton16;
  throw std::invalid_argument("unknown stencil name: " + name);
}

double cut_pair_phi(const ConformalGrid& g, Cell c, int dx, int dy) {
  if (g.is_flat()) return 1.0;
  // Midpoint of the two cell centers on the doubled lattice; at most one
  // coordinate is a half-integer there.
  const int mx2 = 2 * c.x + 1 + dx;
  const int my2 = 2 * c.y + 1 + dy;
  const auto vertex_phi = [&](int vx, int vy) {
    if (g.boundary_mode() == BoundaryMode::periodic) {
      return g.phi(Vertex{vx, vy});
    }
    return g.phi(Vertex{std::clamp(vx, 0, g.width()), std::clamp(vy, 0, g.height())});
  };
  if (mx2 % 2 == 0 && my2 % 2 == 0) return vertex_phi(mx2 / 2, my2 / 2);
  if (mx2 % 2 != 0) {
    const int lo = (mx2 - 1) / 2;
    return 0.5 * (vertex_phi(lo, my2 / 2) + vertex_phi(lo + 1, my2 / 2));
  }
  const int lo = (my2 - 1) / 2;
  return 0.5 * (vertex_phi(mx2 / 2, lo) + vertex_phi(mx2 / 2, lo + 1));
}

double volume(const ConformalGrid& g, const IndicatorSet& s) {
  require_grid(g, s, "volume");
  return s.volume();
}

namespace {

// Shared scan for perimeter and perimeter_in. Each cut pair is visited
// exactly once, from its inside cell.
template <class Keep>
double cut_sum(const ConformalGrid& g, const IndicatorSet& s, const PerimeterStencil& st,
               Keep&& keep) {
  const bool periodic = g.boundary_mode() == BoundaryMode::periodic;
  const int w = g.width();
  const int h = g.height();
  const double spacing = g.spacing();
  double total = 0.0;
  s.for_each_cell([&](Cell c) {
    for (const StencilDirection& d : st.directions()) {
      Cell n{c.x + d.dx, c.y + d.dy};
      bool inside;
      bool n_in_range = true;
      if (periodic) {
        n = Cell{wrap_mod(n.x, w), wrap_mod(n.y, h)};
        inside = s.contains(n);
      } else if (n.x < 0 || n.x >= w || n.y < 0 || n.y >= h) {
        inside = false;
        n_in_range = false;
      } else {
        inside = s.contains(n);
      }
      if (inside) continue;
      if (!keep(c, n, n_in_range)) continue;
      total += d.weight * cut_pair_phi(g, c, d.dx, d.dy) * spacing;
    }
  });
  return total;
}

}  // namespace

double perimeter(const ConformalGrid& g, const IndicatorSet& s, const PerimeterStencil& st) {
  require_grid(g, s, "perimeter");
  return cut_sum(g, s, st, [](Cell, Cell, bool) { return true; });
}

double perimeter_in(const ConformalGrid& g, const IndicatorSet& s,
                    const IndicatorSet& region, const PerimeterStencil& st) {
  require_grid(g, s, "perimeter_in");
  require_pair(s, region, "perimeter_in");
  return cut_sum(g, s, st, [&](Cell c, Cell n, bool n_in_range) {
    return region.contains(c) || (n_in_range && region.contains(n));
  });
}

double l1_distance(const ConformalGrid& g, const IndicatorSet& a, const IndicatorSet& b) {
  require_grid(g, a, "l1_distance");
  require_pair(a, b, "l1_distance");
  return set_symmetric_difference(g, a, b).volume();
}

LscReport check_lower_semicontinuity(const ConformalGrid& g,
                                     std::span<const IndicatorSet> sequence,
                                     const IndicatorSet& limit,
                                     const PerimeterStencil& st, double tol_l1,
                                     double tol) {
  if (sequence.empty()) {
    throw std::invalid_argument("check_lower_semicontinuity: empty sequence");
  }
  LscReport rep;
  rep.limit_perimeter = perimeter(g, limit, st);
  for (const IndicatorSet& s : sequence) {
    rep.distances.push_back(l1_distance(g, s, limit));
    rep.perimeters.push_back(perimeter(g, s, st));
  }
  const int n = static_cast<int>(sequence.size());
  int idx = -1;
  for (int i = n - 1; i >= 0; --i) {
    if (rep.distances[i] <= tol_l1) {
      idx = i;
    } else {
      break;
    }
  }
  if (idx < 0) {
    rep.vacuous = true;
    return rep;
  }
  rep.l1_converged = true;
  rep.convergence_index = idx;
  double liminf = std::numeric_limits<double>::infinity();
  for (int i = idx; i < n; ++i) liminf = std::min(liminf, rep.perimeters[i]);
  rep.liminf_perimeter = liminf;
  rep.lower_semicontinuous = rep.limit_perimeter <= liminf + tol;
  return rep;
}

}  // namespace isolab
