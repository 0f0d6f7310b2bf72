#include "isolab/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>

#include "isolab/util.hpp"

namespace isolab {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

const int kNbrDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
const int kNbrDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

// Exact 8-neighbor path length on a flat grid for an axis offset
// (|dx|, |dy|): diagonal steps cover the shared span, axis steps the rest.
double flat_path_length(int adx, int ady, double h) {
  const int lo = std::min(adx, ady);
  const int hi = std::max(adx, ady);
  return (hi - lo) * h + lo * h * kSqrt2;
}

int wrap_mod(int a, int m) {
  int r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace

double bump_profile(double t) {
  const double a = std::abs(t);
  if (a >= 1.0) return 0.0;
  const double s = 1.0 - a * a;
  return s * s * s;
}

bool ConformalGrid::vertex_in_range(Vertex v) const {
  if (mode_ == BoundaryMode::periodic) return true;
  return v.x >= 0 && v.x <= width_ && v.y >= 0 && v.y <= height_;
}

bool ConformalGrid::cell_in_range(Cell c) const {
  if (mode_ == BoundaryMode::periodic) return true;
  return c.x >= 0 && c.x < width_ && c.y >= 0 && c.y < height_;
}

Vertex ConformalGrid::normalize(Vertex v) const {
  if (mode_ != BoundaryMode::periodic) return v;
  return Vertex{wrap_mod(v.x, width_), wrap_mod(v.y, height_)};
}

double ConformalGrid::phi(Vertex v) const {
  if (mode_ == BoundaryMode::periodic) {
    v = normalize(v);
  } else if (!vertex_in_range(v)) {
    throw std::invalid_argument("phi: vertex out of range on open grid");
  }
  if (flat_) return 1.0;
  return (*phi_)[static_cast<std::size_t>(v.y) * (width_ + 1) + v.x];
}

double ConformalGrid::phi_bilinear(double lx, double ly) const {
  lx = std::clamp(lx, 0.0, static_cast<double>(width_));
  ly = std::clamp(ly, 0.0, static_cast<double>(height_));
  if (flat_) return 1.0;
  const int x0 = std::min(static_cast<int>(lx), width_);
  const int y0 = std::min(static_cast<int>(ly), height_);
  const int x1 = std::min(x0 + 1, width_);
  const int y1 = std::min(y0 + 1, height_);
  const double fx = lx - x0;
  const double fy = ly - y0;
  const auto at = [&](int x, int y) {
    return (*phi_)[static_cast<std::size_t>(y) * (width_ + 1) + x];
  };
  return (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x1, y0) +
         (1 - fx) * fy * at(x0, y1) + fx * fy * at(x1, y1);
}

double ConformalGrid::cell_phi_mean(Cell c) const {
  if (!cell_in_range(c)) throw std::invalid_argument("cell out of range");
  if (flat_) return 1.0;
  const Cell n = mode_ == BoundaryMode::periodic
                     ? Cell{wrap_mod(c.x, width_), wrap_mod(c.y, height_)}
                     : c;
  const auto at = [&](int x, int y) {
    return (*phi_)[static_cast<std::size_t>(y) * (width_ + 1) + x];
  };
  return 0.25 * (at(n.x, n.y) + at(n.x + 1, n.y) + at(n.x, n.y + 1) +
                 at(n.x + 1, n.y + 1));
}

double ConformalGrid::cell_volume(Cell c) const {
  const double m = cell_phi_mean(c);
  return m * m * h_ * h_;
}

int ConformalGrid::vertex_index(Vertex v) const {
  v = normalize(v);
  if (!vertex_in_range(v)) throw std::invalid_argument("vertex out of range");
  return v.y * distinct_cols() + v.x;
}

Vertex ConformalGrid::vertex_at_index(int idx) const {
  return Vertex{idx % distinct_cols(), idx / distinct_cols()};
}

std::vector<double> ConformalGrid::distance_field(Vertex p, double cutoff) const {
  p = normalize(p);
  if (!vertex_in_range(p)) throw std::invalid_argument("distance_field: vertex out of range");
  const int cols = distinct_cols();
  const int rows = distinct_rows();
  std::vector<double> dist(static_cast<std::size_t>(cols) * rows,
                           std::numeric_limits<double>::infinity());
  if (flat_) {
    for (int y = 0; y < rows; ++y) {
      for (int x = 0; x < cols; ++x) {
        int adx = std::abs(x - p.x);
        int ady = std::abs(y - p.y);
        if (mode_ == BoundaryMode::periodic) {
          adx = std::min(adx, width_ - adx);
          ady = std::min(ady, height_ - ady);
        }
        dist[static_cast<std::size_t>(y) * cols + x] = flat_path_length(adx, ady, h_);
      }
    }
    return dist;
  }
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[vertex_index(p)] = 0.0;
  heap.emplace(0.0, vertex_index(p));
  while (!heap.empty()) {
    auto [d, ui] = heap.top();
    heap.pop();
    if (d > dist[ui] || d > cutoff) continue;  // pops ascend, so beyond-cutoff is final
    const Vertex u = vertex_at_index(ui);
    const double phi_u = phi(u);
    for (int k = 0; k < 8; ++k) {
      Vertex v{u.x + kNbrDx[k], u.y + kNbrDy[k]};
      if (mode_ == BoundaryMode::open && !vertex_in_range(v)) continue;
      const int vi = vertex_index(v);
      const double step = k < 4 ? h_ : h_ * kSqrt2;
      const double nd = d + 0.5 * (phi_u + phi(v)) * step;
      if (nd < dist[vi]) {
        dist[vi] = nd;
        heap.emplace(nd, vi);
      }
    }
  }
  return dist;
}

double ConformalGrid::geodesic_distance(Vertex p, Vertex q) const {
  p = normalize(p);
  q = normalize(q);
  if (!vertex_in_range(p) || !vertex_in_range(q)) {
    throw std::invalid_argument("geodesic_distance: vertex out of range");
  }
  if (flat_) {
    int adx = std::abs(q.x - p.x);
    int ady = std::abs(q.y - p.y);
    if (mode_ == BoundaryMode::periodic) {
      adx = std::min(adx, width_ - adx);
      ady = std::min(ady, height_ - ady);
    }
    return flat_path_length(adx, ady, h_);
  }
  return distance_field(p)[vertex_index(q)];
}

std::vector<Cell> ConformalGrid::metric_ball(Vertex p, double R) const {
  p = normalize(p);
  if (!vertex_in_range(p)) throw std::invalid_argument("metric_ball: vertex out of range");
  if (R < 0.0) throw std::invalid_argument("metric_ball: negative radius");
  std::vector<Cell> cells;
  if (flat_) {
    const int br = static_cast<int>(std::ceil(R / h_));
    const int y_lo = mode_ == BoundaryMode::periodic
                         ? (2 * br + 1 >= height_ ? 0 : p.y - br)
                         : std::max(0, p.y - br);
    const int y_hi = mode_ == BoundaryMode::periodic
                         ? (2 * br + 1 >= height_ ? height_ - 1 : p.y + br)
                         : std::min(height_ - 1, p.y + br);
    const int x_lo = mode_ == BoundaryMode::periodic
                         ? (2 * br + 1 >= width_ ? 0 : p.x - br)
                         : std::max(0, p.x - br);
    const int x_hi = mode_ == BoundaryMode::periodic
                         ? (2 * br + 1 >= width_ ? width_ - 1 : p.x + br)
                         : std::min(width_ - 1, p.x + br);
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        int adx = std::abs(x - p.x);
        int ady = std::abs(y - p.y);
        if (mode_ == BoundaryMode::periodic) {
          adx = std::min(adx, width_ - adx);
          ady = std::min(ady, height_ - ady);
        }
        if (flat_path_length(adx, ady, h_) <= R) {
          cells.push_back(Cell{mode_ == BoundaryMode::periodic
                                   ? wrap_mod(x, width_)
                                   : x,
                               mode_ == BoundaryMode::periodic
                                   ? wrap_mod(y, height_)
                                   : y});
        }
      }
    }
  } else {
    // Truncated Dijkstra: only the ball's neighborhood gets expanded.
    const int cols = distinct_cols();
    std::vector<double> dist(static_cast<std::size_t>(cols) * distinct_rows(),
                             std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    dist[vertex_index(p)] = 0.0;
    heap.emplace(0.0, vertex_index(p));
    while (!heap.empty()) {
      auto [d, ui] = heap.top();
      heap.pop();
      if (d > dist[ui] || d > R) continue;
      const Vertex u = vertex_at_index(ui);
      const double phi_u = phi(u);
      for (int k = 0; k < 8; ++k) {
        Vertex v{u.x + kNbrDx[k], u.y + kNbrDy[k]};
        if (mode_ == BoundaryMode::open && !vertex_in_range(v)) continue;
        const int vi = vertex_index(v);
        const double step = k < 4 ? h_ : h_ * kSqrt2;
        const double nd = d + 0.5 * (phi_u + phi(v)) * step;
        if (nd < dist[vi]) {
          dist[vi] = nd;
          heap.emplace(nd, vi);
        }
      }
    }
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        if (dist[vertex_index(Vertex{x, y})] <= R) cells.push_back(Cell{x, y});
      }
    }
    return cells;
  }
  std::sort(cells.begin(), cells.end(), [](Cell a, Cell b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  return cells;
}

double ConformalGrid::gauss_curvature(Vertex v, bool* used_one_sided) const {
  v = normalize(v);
  if (!vertex_in_range(v)) throw std::invalid_argument("gauss_curvature: vertex out of range");
  if (used_one_sided) *used_one_sided = false;
  const auto u = [&](int x, int y) {
    if (mode_ == BoundaryMode::periodic) {
      return std::log(phi(Vertex{x, y}));
    }
    return std::log((*phi_)[static_cast<std::size_t>(y) * (width_ + 1) + x]);
  };
  if (flat_) return 0.0;
  double uxx, uyy;
  bool one_sided = false;
  if (mode_ == BoundaryMode::periodic) {
    uxx = u(v.x + 1, v.y) - 2.0 * u(v.x, v.y) + u(v.x - 1, v.y);
    uyy = u(v.x, v.y + 1) - 2.0 * u(v.x, v.y) + u(v.x, v.y - 1);
  } else {
    if (v.x == 0) {
      uxx = u(0, v.y) - 2.0 * u(1, v.y) + u(2, v.y);
      one_sided = true;
    } else if (v.x == width_) {
      uxx = u(width_, v.y) - 2.0 * u(width_ - 1, v.y) + u(width_ - 2, v.y);
      one_sided = true;
    } else {
      uxx = u(v.x + 1, v.y) - 2.0 * u(v.x, v.y) + u(v.x - 1, v.y);
    }
    if (v.y == 0) {
      uyy = u(v.x, 0) - 2.0 * u(v.x, 1) + u(v.x, 2);
      one_sided = true;
    } else if (v.y == height_) {
      uyy = u(v.x, height_) - 2.0 * u(v.x, height_ - 1) + u(v.x, height_ - 2);
      one_sided = true;
    } else {
      uyy = u(v.x, v.y + 1) - 2.0 * u(v.x, v.y) + u(v.x, v.y - 1);
    }
  }
  if (used_one_sided) *used_one_sided = one_sided;
  const double laplace = (uxx + uyy) / (h_ * h_);
  const double f = phi(v);
  return -laplace / (f * f);
}

GeometryReport ConformalGrid::verify_bounded_geometry(double k, double v0) const {
  GeometryReport rep;
  rep.k = k;
  rep.v0 = v0;

  double min_curv = std::numeric_limits<double>::infinity();
  const bool open = mode_ == BoundaryMode::open;
  const int cx_lo = open ? 1 : 0;
  const int cx_hi = open ? width_ - 1 : distinct_cols() - 1;
  const int cy_lo = open ? 1 : 0;
  const int cy_hi = open ? height_ - 1 : distinct_rows() - 1;
  for (int y = cy_lo; y <= cy_hi; ++y) {
    for (int x = cx_lo; x <= cx_hi; ++x) {
      min_curv = std::min(min_curv, gauss_curvature(Vertex{x, y}));
      ++rep.curvature_vertices_scanned;
    }
  }
  rep.min_curvature = min_curv;

  // Unit-ball volumes by summing cell volumes over metric balls. On open
  // grids, centers whose ball reaches the border cell ring are clipped by
  // the wall and get excluded (all centers are kept if every one is
  // clipped, e.g. on very small grids).
  double min_ball = std::numeric_limits<double>::infinity();
  double min_ball_all = std::numeric_limits<double>::infinity();
  int unclipped = 0;
  for (int y = 0; y < distinct_rows(); ++y) {
    for (int x = 0; x < distinct_cols(); ++x) {
      const auto ball = metric_ball(Vertex{x, y}, 1.0);
      double vol = 0.0;
      // An empty ball (extreme corner vertex, no whole cell within reach)
      // is the fully-clipped case.
      bool clipped = ball.empty();
      for (const Cell& c : ball) {
        vol += cell_volume(c);
        if (open && (c.x == 0 || c.x == width_ - 1 || c.y == 0 || c.y == height_ - 1)) {
          clipped = true;
        }
      }
      min_ball_all = std::min(min_ball_all, vol);
      if (open && clipped) {
        ++rep.clipped_centers_excluded;
      } else {
        min_ball = std::min(min_ball, vol);
        ++unclipped;
      }
    }
  }
  rep.ball_centers_scanned = unclipped;
  if (unclipped == 0) {
    rep.min_unit_ball_volume = min_ball_all;
    rep.ball_centers_scanned = distinct_vertex_count();
    rep.clipped_centers_excluded = 0;
  } else {
    rep.min_unit_ball_volume = min_ball;
  }

  rep.passes.curvature = rep.min_curvature >= k;
  rep.passes.ball = rep.min_unit_ball_volume >= v0;
  return rep;
}

bool ConformalGrid::operator==(const ConformalGrid& other) const {
  return width_ == other.width_ && height_ == other.height_ && h_ == other.h_ &&
         mode_ == other.mode_ && (phi_ == other.phi_ || *phi_ == *other.phi_);
}

void ConformalGrid::finalize(std::vector<double> phi) {
  if (width_ < 2 || height_ < 2) {
    throw std::invalid_argument("grid: width and height must be >= 2");
  }
  if (!(h_ > 0.0)) throw std::invalid_argument("grid: spacing h must be > 0");
  const std::size_t want =
      static_cast<std::size_t>(width_ + 1) * (height_ + 1);
  if (phi.size() != want) {
    throw std::invalid_argument("grid: phi must hold (width+1)*(height+1) values");
  }
  for (double f : phi) {
    if (!(f > 0.0)) throw std::invalid_argument("grid: phi must be positive everywhere");
  }
  if (mode_ == BoundaryMode::periodic) {
    for (int y = 0; y <= height_; ++y) {
      if (phi[static_cast<std::size_t>(y) * (width_ + 1) + width_] !=
          phi[static_cast<std::size_t>(y) * (width_ + 1)]) {
        throw std::invalid_argument("grid: periodic phi must wrap (column width == column 0)");
      }
    }
    for (int x = 0; x <= width_; ++x) {
      if (phi[static_cast<std::size_t>(height_) * (width_ + 1) + x] != phi[x]) {
        throw std::invalid_argument("grid: periodic phi must wrap (row height == row 0)");
      }
    }
  }
  flat_ = std::all_of(phi.begin(), phi.end(), [](double f) { return f == 1.0; });
  min_phi_ = *std::min_element(phi.begin(), phi.end());
  max_phi_ = *std::max_element(phi.begin(), phi.end());
  phi_ = std::make_shared<const std::vector<double>>(std::move(phi));
  total_volume_ = 0.0;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) total_volume_ += cell_volume(Cell{x, y});
  }
  std::uint64_t id = fnv1a_u64(static_cast<std::uint64_t>(width_), 1469598103934665603ull);
  id = fnv1a_u64(static_cast<std::uint64_t>(height_), id);
  id = fnv1a(&h_, sizeof h_, id);
  id = fnv1a_u64(mode_ == BoundaryMode::periodic ? 1 : 0, id);
  id = fnv1a(phi_->data(), phi_->size() * sizeof(double), id);
  id_ = id;
}

ConformalGrid ConformalGrid::flat(int width, int height, double h, BoundaryMode mode) {
  ConformalGrid g;
  g.width_ = width;
  g.height_ = height;
  g.h_ = h;
  g.mode_ = mode;
  g.finalize(std::vector<double>(static_cast<std::size_t>(width + 1) * (height + 1), 1.0));
  return g;
}

ConformalGrid ConformalGrid::from_phi(int width, int height, double h,
                                      BoundaryMode mode, std::vector<double> phi) {
  ConformalGrid g;
  g.width_ = width;
  g.height_ = height;
  g.h_ = h;
  g.mode_ = mode;
  g.finalize(std::move(phi));
  return g;
}

ConformalGrid ConformalGrid::from_function(
    int width, int height, double h, BoundaryMode mode,
    const std::function<double(double, double)>& phi_at) {
  std::vector<double> phi(static_cast<std::size_t>(width + 1) * (height + 1));
  for (int y = 0; y <= height; ++y) {
    for (int x = 0; x <= width; ++x) {
      phi[static_cast<std::size_t>(y) * (width + 1) + x] = phi_at(x * h, y * h);
    }
  }
  return from_phi(width, height, h, mode, std::move(phi));
}

ConformalGrid ConformalGrid::plane_with_caps(int width, int height, double h,
                                             BoundaryMode mode, const CapSpec& spec) {
  if (width < 2 || height < 2) {
    throw std::invalid_argument("plane_with_caps: width and height must be >= 2");
  }
  if (!(h > 0.0)) throw std::invalid_argument("plane_with_caps: spacing h must be > 0");
  for (std::size_t i = 0; i < spec.caps.size(); ++i) {
    const Cap& c = spec.caps[i];
    if (c.amplitude < 0.0) {
      throw std::invalid_argument("plane_with_caps: caps[" + std::to_string(i) +
                                  "].amplitude must be >= 0");
    }
    if (!(c.radius > 0.0)) {
      throw std::invalid_argument("plane_with_caps: caps[" + std::to_string(i) +
                                  "].radius must be > 0");
    }
    if (mode == BoundaryMode::open &&
        (c.center.x < 0 || c.center.x > width || c.center.y < 0 || c.center.y > height)) {
      throw std::invalid_argument("plane_with_caps: caps[" + std::to_string(i) +
                                  "].center outside the vertex lattice");
    }
  }
  const auto center_dist = [&](const Cap& a, const Cap& b) {
    double dx = std::abs(a.center.x - b.center.x) * h;
    double dy = std::abs(a.center.y - b.center.y) * h;
    if (mode == BoundaryMode::periodic) {
      dx = std::min(dx, width * h - dx);
      dy = std::min(dy, height * h - dy);
    }
    return std::hypot(dx, dy);
  };
  for (std::size_t i = 0; i < spec.caps.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.caps.size(); ++j) {
      if (center_dist(spec.caps[i], spec.caps[j]) <
          spec.caps[i].radius + spec.caps[j].radius) {
        throw std::invalid_argument("plane_with_caps: caps[" + std::to_string(i) +
                                    "] and caps[" + std::to_string(j) +
                                    "] have overlapping supports");
      }
    }
  }
  std::vector<double> phi(static_cast<std::size_t>(width + 1) * (height + 1), 1.0);
  for (const Cap& c : spec.caps) {
    if (c.amplitude == 0.0) continue;
    for (int y = 0; y <= height; ++y) {
      for (int x = 0; x <= width; ++x) {
        double dx = std::abs(x - c.center.x) * h;
        double dy = std::abs(y - c.center.y) * h;
        if (mode == BoundaryMode::periodic) {
          dx = std::min(dx, width * h - dx);
          dy = std::min(dy, height * h - dy);
        }
        const double r = std::hypot(dx, dy);
        if (r < c.radius) {
          phi[static_cast<std::size_t>(y) * (width + 1) + x] +=
              c.amplitude * bump_profile(r / c.radius);
        }
      }
    }
  }
  return from_phi(width, height, h, mode, std::move(phi));
}

double recentered_metric_difference(const ConformalGrid& a, Vertex pa,
                                    const ConformalGrid& b, Vertex pb,
                                    double R) {
  if (a.spacing() != b.spacing()) {
    throw std::invalid_argument("recentered_metric_difference: grids must share the spacing h");
  }
  if (R < 0.0) throw std::invalid_argument("recentered_metric_difference: negative radius");
  const int w = static_cast<int>(std::floor(R / a.spacing() + 1e-9));
  const auto check = [&](const ConformalGrid& g, Vertex p) {
    if (g.boundary_mode() == BoundaryMode::open &&
        (p.x - w < 0 || p.x + w > g.width() || p.y - w < 0 || p.y + w > g.height())) {
      throw std::invalid_argument(
          "recentered_metric_difference: window leaves the open grid");
    }
  };
  check(a, pa);
  check(b, pb);
  double sup = 0.0;
  for (int dy = -w; dy <= w; ++dy) {
    for (int dx = -w; dx <= w; ++dx) {
      const double d = std::abs(a.phi(Vertex{pa.x + dx, pa.y + dy}) -
                                b.phi(Vertex{pb.x + dx, pb.y + dy}));
      sup = std::max(sup, d);
    }
  }
  return sup;
}

ConformalGrid subgrid_window(const ConformalGrid& g, Vertex center,
                             int radius_cells) {
  if (radius_cells < 1) throw std::invalid_argument("subgrid_window: radius must be >= 1");
  if (g.boundary_mode() == BoundaryMode::open &&
      (center.x - radius_cells < 0 || center.x + radius_cells > g.width() ||
       center.y - radius_cells < 0 || center.y + radius_cells > g.height())) {
    throw std::invalid_argument("subgrid_window: window leaves the open grid");
  }
  const int side = 2 * radius_cells;
  std::vector<double> phi(static_cast<std::size_t>(side + 1) * (side + 1));
  for (int y = 0; y <= side; ++y) {
    for (int x = 0; x <= side; ++x) {
      phi[static_cast<std::size_t>(y) * (side + 1) + x] =
          g.phi(Vertex{center.x - radius_cells + x, center.y - radius_cells + y});
    }
  }
  return ConformalGrid::from_phi(side, side, g.spacing(), BoundaryMode::open,
                                 std::move(phi));
}

}  // namespace isolab
