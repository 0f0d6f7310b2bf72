#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace isolab {

// A 2-D Riemannian surface discretized as a rectangular lattice with a
// conformal metric g = phi(x)^2 * (flat). phi is sampled at lattice
// vertices; cells are the unit squares between them. Instances are
// immutable after construction, so concurrent reads are safe.

enum class BoundaryMode { open, periodic };

struct Vertex {
  int x = 0;
  int y = 0;
  bool operator==(const Vertex&) const = default;
};

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

// Compactly supported C^2 bump: (1 - t^2)^3 on [0, 1], 0 beyond.
double bump_profile(double t);

// One curvature bump added to the conformal factor. `center` is a lattice
// vertex; `radius` is the support radius in length units.
struct Cap {
  Vertex center;
  double amplitude = 0.0;
  double radius = 0.0;
};

struct CapSpec {
  std::vector<Cap> caps;
};

// Result of the bounded-geometry check (curvature floor k, unit-ball
// volume floor v0). On open grids the scans skip wall-affected samples:
// curvature uses interior vertices and the ball scan drops centers whose
// unit ball is clipped by the wall, so the verdict reflects the bulk
// geometry rather than the artificial boundary.
struct GeometryReport {
  double min_curvature = 0.0;
  double min_unit_ball_volume = 0.0;
  struct {
    bool curvature = false;
    bool ball = false;
  } passes;
  double k = 0.0;
  double v0 = 0.0;
  int curvature_vertices_scanned = 0;
  int ball_centers_scanned = 0;
  int clipped_centers_excluded = 0;
};

class ConformalGrid {
 public:
  // `width` x `height` cells (each >= 2), spacing h > 0. phi is given
  // per vertex, row-major over (width+1) x (height+1) entries, all > 0.
  // Periodic grids must wrap consistently: column `width` equals column 0
  // and row `height` equals row 0.
  static ConformalGrid flat(int width, int height, double h, BoundaryMode mode);
  static ConformalGrid from_phi(int width, int height, double h,
                                BoundaryMode mode, std::vector<double> phi);
  // Samples phi_at(x, y) at physical vertex coordinates (x*h, y*h).
  static ConformalGrid from_function(
      int width, int height, double h, BoundaryMode mode,
      const std::function<double(double, double)>& phi_at);
  // phi = 1 + sum of cap bumps. Rejects negative amplitudes, nonpositive
  // radii, supports leaving an open grid, and overlapping supports.
  // Amplitude 0 is legal and leaves phi untouched.
  static ConformalGrid plane_with_caps(int width, int height, double h,
                                       BoundaryMode mode, const CapSpec& spec);

  int width() const { return width_; }
  int height() const { return height_; }
  double spacing() const { return h_; }
  BoundaryMode boundary_mode() const { return mode_; }
  // Content-derived identity token: equal-content grids share an id.
  std::uint64_t id() const { return id_; }
  bool is_flat() const { return flat_; }
  double min_phi() const { return min_phi_; }
  double max_phi() const { return max_phi_; }

  int vertex_cols() const { return width_ + 1; }
  int vertex_rows() const { return height_ + 1; }
  // Distinct vertices (periodic grids identify the wrapped border).
  int distinct_cols() const { return mode_ == BoundaryMode::periodic ? width_ : width_ + 1; }
  int distinct_rows() const { return mode_ == BoundaryMode::periodic ? height_ : height_ + 1; }
  int distinct_vertex_count() const { return distinct_cols() * distinct_rows(); }

  bool vertex_in_range(Vertex v) const;
  bool cell_in_range(Cell c) const;
  std::size_t cell_count() const {
    return static_cast<std::size_t>(width_) * height_;
  }
  std::size_t cell_index(Cell c) const {
    return static_cast<std::size_t>(c.y) * width_ + c.x;
  }
  Cell cell_at(std::size_t idx) const {
    return Cell{static_cast<int>(idx % width_), static_cast<int>(idx / width_)};
  }

  // Wraps on periodic grids; rejects out-of-range vertices on open grids.
  double phi(Vertex v) const;
  // Bilinear interpolation at lattice coordinates, clamped to the vertex
  // lattice; used for metric factors at cut midpoints.
  double phi_bilinear(double lx, double ly) const;

  // Cell volume phi_c^2 h^2 with phi_c the mean of the 4 corner values.
  double cell_volume(Cell c) const;
  double cell_phi_mean(Cell c) const;
  double total_volume() const { return total_volume_; }

  // Geodesics run on the 8-neighbor vertex graph; an edge weighs
  // phi_mid * h (axis) or phi_mid * h * sqrt(2) (diagonal) with phi_mid
  // the mean of its endpoint values. Flat grids use the exact closed
  // form; the generic path is Dijkstra.
  double geodesic_distance(Vertex p, Vertex q) const;
  // Distances from p to every distinct vertex, indexed by vertex_index().
  // Entries <= cutoff are exact; beyond it they are loose bounds or +inf.
  std::vector<double> distance_field(Vertex p,
                                     double cutoff = std::numeric_limits<double>::infinity()) const;
  int vertex_index(Vertex v) const;
  Vertex vertex_at_index(int idx) const;

  // Cells whose anchor vertex (the cell's lower-left lattice corner,
  // which represents the cell) is within geodesic distance R of p.
  // Sorted row-major; monotone in R.
  std::vector<Cell> metric_ball(Vertex p, double R) const;

  // Gauss curvature K = -laplace(log phi) / phi^2 with the 5-point
  // Laplacian. Open-grid boundary vertices fall back to a one-sided
  // stencil; `used_one_sided` reports when that happened.
  double gauss_curvature(Vertex v, bool* used_one_sided = nullptr) const;

  GeometryReport verify_bounded_geometry(double k, double v0) const;

  bool operator==(const ConformalGrid& other) const;

  const std::vector<double>& phi_values() const { return *phi_; }

 private:
  ConformalGrid() = default;
  void finalize(std::vector<double> phi);
  Vertex normalize(Vertex v) const;

  int width_ = 0;
  int height_ = 0;
  double h_ = 0.0;
  BoundaryMode mode_ = BoundaryMode::open;
  // Shared so grid copies are cheap; sequences hold one grid per term.
  std::shared_ptr<const std::vector<double>> phi_;  // (width+1)*(height+1), row-major
  bool flat_ = false;
  double min_phi_ = 0.0;
  double max_phi_ = 0.0;
  double total_volume_ = 0.0;
  std::uint64_t id_ = 0;
};

// Sup over the lattice window |u|_inf <= floor(R/h) of
// |phi_a(pa + u) - phi_b(pb + u)|. Both grids must share the spacing;
// windows escaping an open grid are rejected.
double recentered_metric_difference(const ConformalGrid& a, Vertex pa,
                                    const ConformalGrid& b, Vertex pb,
                                    double R);

// Open-mode window of (2*radius_cells)^2 cells centered at `center`,
// with phi copied from the source grid (wrapped on periodic sources).
ConformalGrid subgrid_window(const ConformalGrid& g, Vertex center,
                             int radius_cells);

}  // namespace isolab
