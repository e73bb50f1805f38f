#include "hand_twin/wrist.hpp"

#include "hand_twin/kinematics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace hand_twin {

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

void check_geometry(const WristGeometry& g) {
  if (!(g.stroke_mm > 0.0)) throw DomainError("wrist stroke must be > 0");
  if (!(g.upper_radius_mm() > 0.0)) throw DomainError("wrist upper anchor radius must be > 0");
  if (!(g.swivel_limit_deg >= 0.0)) throw DomainError("wrist swivel limit must be >= 0");
}

}  // namespace

WristSolution wrist_solve(const WristGeometry& g, const WristPose& pose) {
  if (!std::isfinite(pose.fe_deg) || !std::isfinite(pose.rud_deg)) {
    throw DomainError("wrist pose is not finite");
  }
  const Mat3 r = wrist_rotation(pose.fe_deg, pose.rud_deg);
  const auto lower = g.lower_anchors();
  const auto upper = g.upper_anchors();
  const double lo = g.min_length_mm;
  const double hi = g.min_length_mm + g.stroke_mm;
  constexpr double eps = 1e-9;

  WristSolution s;
  for (std::size_t i = 0; i < 2; ++i) {
    const Vec3 neutral = upper[i] - lower[i];
    const Vec3 rod = r * upper[i] - lower[i];
    s.length_mm[i] = rod.norm();
    const double at_lower = angle_between(rod, neutral);
    const double at_upper = angle_between(rod, r * neutral);
    s.swivel_deg[i] = rad2deg(std::max(at_lower, at_upper));

    const std::string name = "rod " + std::to_string(i + 1);
    if (s.length_mm[i] < lo - eps || s.length_mm[i] > hi + eps) {
      if (s.within_stroke && s.within_swivel) {
        s.binding = name + (s.length_mm[i] < lo ? " stroke (retracted)" : " stroke (extended)");
      }
      s.within_stroke = false;
    }
    if (s.swivel_deg[i] > g.swivel_limit_deg + eps) {
      if (s.within_stroke && s.within_swivel) s.binding = name + " swivel";
      s.within_swivel = false;
    }
  }
  return s;
}

WristSolution wrist_ik(const WristGeometry& g, const WristPose& pose) {
  check_geometry(g);
  auto s = wrist_solve(g, pose);
  if (!s.feasible()) {
    std::ostringstream os;
    os << "wrist pose (" << pose.fe_deg << ", " << pose.rud_deg << ") violates " << s.binding;
    throw InfeasibleError(os.str());
  }
  return s;
}

namespace {

// Damped Newton on the two lengths. Returns false without convergence.
bool newton_fk(const WristGeometry& g, const std::array<double, 2>& target, WristPose& pose) {
  auto residual = [&](double fe, double rud) {
    const auto s = wrist_solve(g, {fe, rud});
    return Eigen::Vector2d(s.length_mm[0] - target[0], s.length_mm[1] - target[1]);
  };
  double fe = pose.fe_deg;
  double rud = pose.rud_deg;
  Eigen::Vector2d f = residual(fe, rud);
  for (int it = 0; it < 100; ++it) {
    if (f.cwiseAbs().maxCoeff() < 1e-10) {
      pose = {fe, rud};
      return true;
    }
    constexpr double h = 1e-6;
    Eigen::Matrix2d j;
    j.col(0) = (residual(fe + h, rud) - residual(fe - h, rud)) / (2.0 * h);
    j.col(1) = (residual(fe, rud + h) - residual(fe, rud - h)) / (2.0 * h);
    if (std::abs(j.determinant()) < 1e-14) return false;
    const Eigen::Vector2d step = j.fullPivLu().solve(-f);
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 30; ++k) {
      const Eigen::Vector2d next = residual(fe + t * step[0], rud + t * step[1]);
      if (next.norm() < f.norm()) {
        fe += t * step[0];
        rud += t * step[1];
        f = next;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  if (f.cwiseAbs().maxCoeff() < 1e-9) {
    pose = {fe, rud};
    return true;
  }
  return false;
}

}  // namespace

WristPose wrist_fk(const WristGeometry& g, const std::array<double, 2>& lengths_mm) {
  check_geometry(g);
  const double lo = g.min_length_mm;
  const double hi = g.min_length_mm + g.stroke_mm;
  for (std::size_t i = 0; i < 2; ++i) {
    if (!std::isfinite(lengths_mm[i]) || lengths_mm[i] < lo - 1e-9 || lengths_mm[i] > hi + 1e-9) {
      std::ostringstream os;
      os << "rod " << i + 1 << " length " << lengths_mm[i] << " mm outside [" << lo << ", " << hi
         << "]";
      throw StrokeError(os.str());
    }
  }

  // Neutral first, then spread seeds to expose a second branch.
  const std::array<WristPose, 5> seeds = {
      WristPose{0.0, 0.0}, WristPose{40.0, 20.0}, WristPose{40.0, -20.0},
      WristPose{-40.0, 20.0}, WristPose{-40.0, -20.0}};
  std::vector<WristPose> found;
  for (const auto& seed : seeds) {
    WristPose p = seed;
    if (!newton_fk(g, lengths_mm, p)) continue;
    // Newton may wander whole turns; candidates live in the scan domain.
    p.fe_deg = std::remainder(p.fe_deg, 360.0);
    p.rud_deg = std::remainder(p.rud_deg, 360.0);
    if (std::abs(p.fe_deg) > 90.0 || std::abs(p.rud_deg) > 90.0) continue;
    if (!wrist_solve(g, p).feasible()) continue;
    bool dup = false;
    for (const auto& q : found) {
      dup = dup || (std::abs(q.fe_deg - p.fe_deg) < 1e-6 && std::abs(q.rud_deg - p.rud_deg) < 1e-6);
    }
    if (!dup) found.push_back(p);
  }
  if (found.empty()) throw InfeasibleError("no wrist pose inside the envelope gives these lengths");
  if (found.size() > 1) {
    std::ostringstream os;
    os << "ambiguous wrist branch:";
    for (const auto& p : found) os << " (" << p.fe_deg << ", " << p.rud_deg << ")";
    throw InfeasibleError(os.str());
  }
  return found.front();
}

// Envelope ------------------------------------------------------------------------

namespace {

// Walks a pure axis outward from neutral on the grid; returns the last
// feasible value and the constraint met just beyond it.
std::pair<double, std::string> walk_axis(const WristGeometry& g, double step, bool fe_axis,
                                         double direction) {
  double last = 0.0;
  const int n = static_cast<int>(std::floor(90.0 / step + 1e-9));
  for (int i = 1; i <= n; ++i) {
    const double v = direction * i * step;
    const WristPose p = fe_axis ? WristPose{v, 0.0} : WristPose{0.0, v};
    const auto s = wrist_solve(g, p);
    if (!s.feasible()) return {last, s.binding};
    last = std::abs(v);
  }
  return {last, "scan limit"};
}

}  // namespace

WristEnvelope wrist_envelope(const WristGeometry& g, double grid_step_deg) {
  if (!(grid_step_deg > 0.0)) throw DomainError("grid step must be > 0");
  check_geometry(g);
  WristEnvelope env;
  env.grid_step_deg = grid_step_deg;
  const int n = static_cast<int>(std::floor(90.0 / grid_step_deg + 1e-9));
  env.grid.reserve(static_cast<std::size_t>((2 * n + 1) * (2 * n + 1)));
  for (int i = -n; i <= n; ++i) {
    for (int k = -n; k <= n; ++k) {
      const WristPose p{i * grid_step_deg, k * grid_step_deg};
      env.grid.push_back({p, wrist_solve(g, p)});
    }
  }
  std::tie(env.max_flexion_deg, env.flexion_binding) = walk_axis(g, grid_step_deg, true, 1.0);
  std::tie(env.max_extension_deg, env.extension_binding) =
      walk_axis(g, grid_step_deg, true, -1.0);
  std::tie(env.max_radial_deg, env.radial_binding) = walk_axis(g, grid_step_deg, false, 1.0);
  std::tie(env.max_ulnar_deg, env.ulnar_binding) = walk_axis(g, grid_step_deg, false, -1.0);
  return env;
}

void write_envelope_csv(std::ostream& os, const WristEnvelope& env) {
  os << "fe_deg,rud_deg,feasible,len1_mm,len2_mm,swivel1_deg,swivel2_deg\n";
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::fixed << std::setprecision(6);
  for (const auto& pt : env.grid) {
    os << pt.pose.fe_deg << ',' << pt.pose.rud_deg << ',' << (pt.solution.feasible() ? 1 : 0)
       << ',' << pt.solution.length_mm[0] << ',' << pt.solution.length_mm[1] << ','
       << pt.solution.swivel_deg[0] << ',' << pt.solution.swivel_deg[1] << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

// Calibration ---------------------------------------------------------------------

namespace {

// Continuous pure-flexion limit, found by scan and bisection.
double flexion_limit(const WristGeometry& g) {
  double lo = 0.0;
  double hi = -1.0;
  for (double v = 0.25; v <= 90.0; v += 0.25) {
    if (!wrist_solve(g, {v, 0.0}).feasible()) {
      hi = v;
      break;
    }
    lo = v;
  }
  if (hi < 0.0) return 90.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (wrist_solve(g, {mid, 0.0}).feasible() ? lo : hi) = mid;
  }
  return lo;
}

WristGeometry with_radius(WristGeometry g, double radius, double extension_deg) {
  g.lower_radius_mm = radius;
  g.min_length_mm = 0.0;
  const auto s = wrist_solve(g, {-extension_deg, 0.0});
  g.min_length_mm = std::min(s.length_mm[0], s.length_mm[1]);
  return g;
}

}  // namespace

WristGeometry calibrate_wrist(const WristGeometry& seed, double flexion_deg,
                              double extension_deg) {
  if (!(flexion_deg > 0.0) || !(extension_deg > 0.0)) {
    throw DomainError("calibration targets must be > 0");
  }
  const double min_radius =
      (seed.lower_offset_mm + seed.upper_offset_mm) / std::tan(deg2rad(seed.axis_tilt_deg));
  auto excess = [&](double r) {
    return flexion_limit(with_radius(seed, r, extension_deg)) - flexion_deg;
  };

  // Bracket the target on a coarse radius scan, then bisect.
  double prev_r = min_radius * 1.05;
  double prev_e = excess(prev_r);
  double lo = -1.0;
  double hi = -1.0;
  for (double r = prev_r + 0.5; r <= min_radius * 6.0; r += 0.5) {
    const double e = excess(r);
    if ((prev_e < 0.0) != (e < 0.0)) {
      lo = prev_r;
      hi = r;
      break;
    }
    prev_r = r;
    prev_e = e;
  }
  if (lo < 0.0) throw InfeasibleError("no anchor radius reaches the requested flexion");
  double e_lo = excess(lo);
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double e = excess(mid);
    if ((e < 0.0) == (e_lo < 0.0)) {
      lo = mid;
      e_lo = e;
    } else {
      hi = mid;
    }
  }
  // Keep the side that still reaches the target.
  return with_radius(seed, e_lo >= 0.0 ? lo : hi, extension_deg);
}

}  // namespace hand_twin
