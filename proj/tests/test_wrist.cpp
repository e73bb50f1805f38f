#include "hand_twin/wrist.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <queue>
#include <sstream>

using namespace hand_twin;

namespace {

WristGeometry geom() { return default_hand().wrist; }

using Cell = std::pair<long, long>;

std::map<Cell, bool> feasibility(const WristEnvelope& env) {
  std::map<Cell, bool> cells;
  for (const auto& p : env.grid) {
    cells[{std::lround(p.pose.fe_deg / env.grid_step_deg),
           std::lround(p.pose.rud_deg / env.grid_step_deg)}] = p.solution.feasible();
  }
  return cells;
}

}  // namespace

TEST_CASE("neutral wrist") {
  const auto s = wrist_ik(geom(), {0.0, 0.0});
  CHECK(s.length_mm[0] == doctest::Approx(s.length_mm[1]).epsilon(1e-12));
  CHECK(std::abs(s.swivel_deg[0]) < 1e-9);
  CHECK(std::abs(s.swivel_deg[1]) < 1e-9);
  CHECK(s.feasible());
  CHECK(s.binding.empty());
}

TEST_CASE("flexion limits") {
  CHECK(wrist_ik(geom(), {52.0, 0.0}).feasible());
  CHECK_THROWS_AS(wrist_ik(geom(), {70.0, 0.0}), InfeasibleError);
  const auto s = wrist_solve(geom(), {70.0, 0.0});
  CHECK_FALSE(s.feasible());
  CHECK_FALSE(s.binding.empty());
  try {
    wrist_ik(geom(), {70.0, 0.0});
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find(s.binding) != std::string::npos);
  }
  CHECK_THROWS_AS(wrist_ik(geom(), {std::nan(""), 0.0}), DomainError);
}

TEST_CASE("forward kinematics round trip") {
  const auto g = geom();
  const auto s = wrist_ik(g, {30.0, 10.0});
  const auto p = wrist_fk(g, s.length_mm);
  CHECK(std::abs(p.fe_deg - 30.0) < 1e-6);
  CHECK(std::abs(p.rud_deg - 10.0) < 1e-6);

  const auto n = wrist_ik(g, {0.0, 0.0});
  const auto z = wrist_fk(g, n.length_mm);
  CHECK(std::abs(z.fe_deg) < 1e-6);
  CHECK(std::abs(z.rud_deg) < 1e-6);

  CHECK_THROWS_AS(wrist_fk(g, {g.min_length_mm - 1.0, n.length_mm[1]}), StrokeError);
  CHECK_THROWS_AS(wrist_fk(g, {n.length_mm[0], g.min_length_mm + g.stroke_mm + 0.5}),
                  StrokeError);
}

TEST_CASE("envelope extremes") {
  const auto env = wrist_envelope(geom(), 0.5);
  CHECK(std::abs(env.max_flexion_deg - 52.0) <= 1.0);
  CHECK(std::abs(env.max_extension_deg - 18.0) <= 1.0);
  CHECK(std::abs(env.max_radial_deg - 18.0) <= 1.0);
  CHECK(std::abs(env.max_ulnar_deg - 18.0) <= 1.0);
  CHECK_FALSE(env.flexion_binding.empty());
  CHECK_THROWS_AS(wrist_envelope(geom(), 0.0), DomainError);
}

TEST_CASE("envelope properties") {
  const auto g = geom();
  const auto env = wrist_envelope(g, 1.0);
  const auto cells = feasibility(env);
  REQUIRE(cells.at({0, 0}));

  // Every feasible pose respects the stroke and swivel bounds and closes the
  // round trip.
  std::size_t feasible = 0;
  for (const auto& p : env.grid) {
    if (!p.solution.feasible()) continue;
    ++feasible;
    for (int i = 0; i < 2; ++i) {
      CHECK(p.solution.length_mm[i] >= g.min_length_mm - 1e-9);
      CHECK(p.solution.length_mm[i] - g.min_length_mm <= 26.92 + 1e-9);
      CHECK(p.solution.swivel_deg[i] <= 40.0 + 1e-9);
    }
    if (feasible % 7 == 0) {
      const auto back = wrist_fk(g, p.solution.length_mm);
      CHECK(std::abs(back.fe_deg - p.pose.fe_deg) < 1e-6);
      CHECK(std::abs(back.rud_deg - p.pose.rud_deg) < 1e-6);
    }
  }
  CHECK(feasible > 100);

  // RUD symmetry.
  for (const auto& [cell, ok] : cells) {
    const auto mirror = cells.find({cell.first, -cell.second});
    REQUIRE(mirror != cells.end());
    CHECK(mirror->second == ok);
  }

  // Connected: a flood fill from neutral reaches every feasible cell.
  std::map<Cell, bool> seen;
  std::queue<Cell> todo;
  todo.push({0, 0});
  seen[{0, 0}] = true;
  while (!todo.empty()) {
    const auto c = todo.front();
    todo.pop();
    for (const Cell d : {Cell{1, 0}, Cell{-1, 0}, Cell{0, 1}, Cell{0, -1}}) {
      const Cell nb{c.first + d.first, c.second + d.second};
      const auto it = cells.find(nb);
      if (it == cells.end() || !it->second || seen.count(nb)) continue;
      seen[nb] = true;
      todo.push(nb);
    }
  }
  CHECK(seen.size() == feasible);
}

TEST_CASE("lengths are Lipschitz in pose") {
  const auto g = geom();
  // Bound: each anchor moves at most its distance from the joint per radian.
  double c = 0.0;
  for (const auto& a : g.upper_anchors()) c = std::max(c, a.norm());
  c *= std::numbers::pi / 180.0;
  const auto env = wrist_envelope(g, 1.0);
  const auto cells = feasibility(env);
  std::map<Cell, WristSolution> sol;
  for (const auto& p : env.grid) {
    sol[{std::lround(p.pose.fe_deg), std::lround(p.pose.rud_deg)}] = p.solution;
  }
  double worst = 0.0;
  for (const auto& [cell, s] : sol) {
    for (const Cell d : {Cell{1, 0}, Cell{0, 1}}) {
      const auto it = sol.find({cell.first + d.first, cell.second + d.second});
      if (it == sol.end()) continue;
      for (int i = 0; i < 2; ++i) {
        worst = std::max(worst, std::abs(it->second.length_mm[i] - s.length_mm[i]));
      }
    }
  }
  CHECK(worst <= c * 1.0 + 1e-9);
  CHECK(cells.size() == sol.size());
}

TEST_CASE("zero swivel limit collapses the envelope") {
  auto g = geom();
  g.swivel_limit_deg = 0.0;
  const auto env = wrist_envelope(g, 1.0);
  std::size_t feasible = 0;
  for (const auto& p : env.grid) {
    if (!p.solution.feasible()) continue;
    ++feasible;
    CHECK(p.pose.fe_deg == 0.0);
    CHECK(p.pose.rud_deg == 0.0);
  }
  CHECK(feasible == 1);
}

TEST_CASE("envelope csv") {
  const auto env = wrist_envelope(geom(), 10.0);
  std::stringstream ss;
  write_envelope_csv(ss, env);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "fe_deg,rud_deg,feasible,len1_mm,len2_mm,swivel1_deg,swivel2_deg");
  std::size_t rows = 0;
  for (std::string line; std::getline(ss, line);) ++rows;
  CHECK(rows == env.grid.size());
}

TEST_CASE("calibration reproduces the default geometry") {
  const auto g = geom();
  auto seed = g;
  seed.lower_radius_mm = 45.0;
  seed.min_length_mm = 40.0;
  const auto cal = calibrate_wrist(seed, 52.0, 18.0);
  CHECK(cal.lower_radius_mm == doctest::Approx(g.lower_radius_mm).epsilon(1e-6));
  CHECK(cal.min_length_mm == doctest::Approx(g.min_length_mm).epsilon(1e-6));
}
