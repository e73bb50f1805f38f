#pragma once

#include "hand_twin/model.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace hand_twin {

struct WristPose {
  double fe_deg = 0.0;   // + palmar flexion
  double rud_deg = 0.0;  // + radial deviation
};

struct WristSolution {
  std::array<double, 2> length_mm{};
  std::array<double, 2> swivel_deg{};  // worse of the two spherical joints per rod
  bool within_stroke = true;
  bool within_swivel = true;
  std::string binding;  // first violated constraint, empty when feasible

  bool feasible() const { return within_stroke && within_swivel; }
};

/// Actuator lengths and swivel angles without feasibility checks.
WristSolution wrist_solve(const WristGeometry& geom, const WristPose& pose);

/// Throws InfeasibleError naming the violated constraint.
WristSolution wrist_ik(const WristGeometry& geom, const WristPose& pose);

/// Pose producing the given actuator lengths (damped Newton from neutral).
/// Throws StrokeError for lengths outside the stroke, InfeasibleError when no
/// in-envelope solution exists or two distinct ones do.
WristPose wrist_fk(const WristGeometry& geom, const std::array<double, 2>& lengths_mm);

struct EnvelopePoint {
  WristPose pose;
  WristSolution solution;
};

struct WristEnvelope {
  double grid_step_deg = 0.5;
  std::vector<EnvelopePoint> grid;
  double max_flexion_deg = 0.0;
  double max_extension_deg = 0.0;
  double max_radial_deg = 0.0;
  double max_ulnar_deg = 0.0;
  std::string flexion_binding;  // constraint that stops flexion along RUD = 0
  std::string extension_binding;
  std::string radial_binding;
  std::string ulnar_binding;
};

/// Grid scan over [-90, 90]^2 deg. Extremes are taken along the pure axes.
WristEnvelope wrist_envelope(const WristGeometry& geom, double grid_step_deg);

void write_envelope_csv(std::ostream& os, const WristEnvelope& env);

/// Solves lower anchor radius and minimum length so that pure flexion stops
/// at `flexion_deg` and pure extension at `extension_deg`.
WristGeometry calibrate_wrist(const WristGeometry& seed, double flexion_deg,
                              double extension_deg);

}  // namespace hand_twin
