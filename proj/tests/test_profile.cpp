#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include <isolab/manifold.hpp>
#include <isolab/perimeter.hpp>
#include <isolab/profile.hpp>

using namespace isolab;

namespace {

ProfileCurve make_curve(std::initializer_list<std::pair<double, double>> pts) {
  ProfileCurve c;
  for (const auto& [v, p] : pts) {
    ProfilePoint pt;
    pt.v = v;
    pt.I_v = p;
    c.points.push_back(std::move(pt));
  }
  return c;
}

}  // namespace

TEST_CASE("brute force on the 4x4 torus") {
  const auto t = ConformalGrid::flat(4, 4, 1.0, BoundaryMode::periodic);
  std::vector<double> vols;
  for (int v = 0; v <= 16; ++v) vols.push_back(v);
  const auto curve = brute_force_profile(t, vols, PerimeterStencil::cut4());
  REQUIRE(curve.points.size() == 17);
  const auto I = [&](int v) { return curve.points[v].I_v; };
  CHECK(I(0) == 0.0);
  CHECK(I(1) == 4.0);
  CHECK(I(2) == 6.0);
  CHECK(I(3) == 8.0);
  CHECK(I(4) == 8.0);   // a wrapping band ties the 2x2 square
  CHECK(I(8) == 8.0);   // half the torus: a two-row band
  CHECK(I(16) == 0.0);  // the full torus has no cut edges
  for (int v = 0; v <= 16; ++v) {
    CHECK(I(v) == I(16 - v));  // complement symmetry
    CHECK(curve.points[v].volume_error == 0.0);
    CHECK(curve.points[v].achieved);
  }
  CHECK(std::is_sorted(curve.points.begin(), curve.points.end(),
                       [](const ProfilePoint& a, const ProfilePoint& b) { return a.v < b.v; }));
}

TEST_CASE("brute force on the 3x5 torus") {
  const auto t = ConformalGrid::flat(3, 5, 1.0, BoundaryMode::periodic);
  std::vector<double> vols;
  for (int v = 0; v <= 15; ++v) vols.push_back(v);
  const auto curve = brute_force_profile(t, vols, PerimeterStencil::cut4());
  REQUIRE(curve.points.size() == 16);
  const auto I = [&](int v) { return curve.points[v].I_v; };
  CHECK(I(1) == 4.0);
  CHECK(I(2) == 6.0);
  CHECK(I(3) == 6.0);  // one full row wraps shut
  CHECK(I(6) == 6.0);  // two adjacent full rows
  CHECK(I(15) == 0.0);
  for (int v = 0; v <= 15; ++v) CHECK(I(v) == I(15 - v));
}

TEST_CASE("brute force rejects grids beyond exhaustive reach") {
  const auto big = ConformalGrid::flat(5, 5, 1.0, BoundaryMode::periodic);
  CHECK_THROWS_AS(brute_force_profile(big, std::vector<double>{1.0}, PerimeterStencil::cut4()),
                  std::invalid_argument);
}

TEST_CASE("lagrangian sweep walks the degenerate torus envelope") {
  const auto t = ConformalGrid::flat(4, 4, 1.0, BoundaryMode::periodic);
  const auto& st = PerimeterStencil::cut4();
  const auto lam = breakpoint_lambda_schedule(t, st);
  REQUIRE(!lam.empty());
  CHECK(lam.front() == 0.0);
  CHECK(std::is_sorted(lam.begin(), lam.end()));
  const auto curve = lagrangian_cut_profile(t, lam, st);
  REQUIRE(curve.points.size() == 2);  // empty and full are the only hull vertices
  CHECK(curve.points.front().v == 0.0);
  CHECK(curve.points.front().I_v == 0.0);
  CHECK(curve.points.back().v == 16.0);
  CHECK(curve.points.back().I_v == 0.0);
}

TEST_CASE("lagrangian sweep points minimize perimeter at their own volume") {
  const auto g = ConformalGrid::flat(4, 4, 1.0, BoundaryMode::open);
  const auto& st = PerimeterStencil::cut4();
  const auto curve = lagrangian_cut_profile(g, breakpoint_lambda_schedule(g, st), st);
  REQUIRE(curve.points.size() >= 2);
  CHECK(curve.points.front().v == 0.0);
  CHECK(curve.points.back().v == 16.0);
  CHECK(curve.points.back().I_v == 16.0);  // the full open grid pays its wall
  std::vector<double> vols;
  for (const auto& p : curve.points) vols.push_back(p.v);
  const auto brute = brute_force_profile(g, vols, st);
  REQUIRE(brute.points.size() == curve.points.size());
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].v == brute.points[i].v);
    CHECK(curve.points[i].I_v == brute.points[i].I_v);
  }
  CHECK_THROWS_AS(lagrangian_cut_profile(g, std::vector<double>{-1.0}, st),
                  std::invalid_argument);
}

TEST_CASE("annealing is deterministic and finds small-torus optima") {
  const auto t = ConformalGrid::flat(4, 4, 1.0, BoundaryMode::periodic);
  const auto& st = PerimeterStencil::cut4();
  AnnealSchedule sched;
  sched.volume_window = 0.5;  // pin integer volumes exactly
  sched.max_iterations = 20000;
  sched.restarts = 4;

  const auto a = annealed_profile_point(t, 6.0, st, sched, 11);
  const auto b = annealed_profile_point(t, 6.0, st, sched, 11);
  CHECK(a.I_v == b.I_v);
  REQUIRE(a.achiever.has_value());
  REQUIRE(b.achiever.has_value());
  CHECK(*a.achiever == *b.achiever);
  CHECK(a.volume_error == 0.0);
  CHECK(a.method == std::string("anneal"));

  const std::vector<double> targets{2.0, 4.0, 6.0, 8.0};
  const auto brute = brute_force_profile(t, targets, st);
  const auto curve = annealed_profile_curve(t, targets, st, sched, 7);
  REQUIRE(curve.points.size() == targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    CHECK(curve.points[i].I_v == brute.points[i].I_v);
    CHECK(curve.points[i].volume_error == 0.0);
    CHECK(curve.points[i].achieved);  // tori have no walls to hug
  }
}

TEST_CASE("wall guard flags open-grid minimizers in the band") {
  const auto g = ConformalGrid::flat(6, 6, 1.0, BoundaryMode::open);
  AnnealSchedule sched;
  sched.volume_window = 0.5;
  sched.max_iterations = 8000;
  sched.guard_band_cells = 3;  // the band covers the whole 6x6 grid
  const auto p = annealed_profile_point(g, 4.0, PerimeterStencil::cut4(), sched, 5);
  CHECK(p.I_v == 8.0);
  CHECK_FALSE(p.achieved);
  CHECK(p.volume_error == 0.0);
}

TEST_CASE("continuity report flags jumps and rejects degenerate curves") {
  const auto flagged = profile_continuity_report(
      make_curve({{1.0, 4.0}, {2.0, 6.0}, {3.0, 18.0}}), 4.0);
  CHECK(flagged.flagged);
  CHECK(flagged.max_jump == 12.0);
  CHECK(flagged.max_jump_index == 1);
  CHECK(flagged.tolerance == 4.0);

  const auto fine = profile_continuity_report(
      make_curve({{1.0, 4.0}, {2.0, 6.0}, {3.0, 8.0}, {4.0, 8.0}}), 4.0);
  CHECK_FALSE(fine.flagged);
  CHECK(fine.max_jump == 2.0);

  CHECK_THROWS_AS(profile_continuity_report(make_curve({{1.0, 4.0}, {2.0, 6.0}}), 4.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(profile_continuity_report(
                      make_curve({{2.0, 6.0}, {1.0, 4.0}, {3.0, 8.0}}), 4.0),
                  std::invalid_argument);
}

TEST_CASE("profile csv has the declared header and one line per point") {
  const auto csv = profile_curve_csv(make_curve({{1.0, 4.0}, {2.0, 6.0}}));
  CHECK(csv.rfind("v,I_v,method,achieved,volume_error\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
