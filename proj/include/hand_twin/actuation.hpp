#pragma once

#include "hand_twin/model.hpp"

#include <array>
#include <vector>

namespace hand_twin {

// Power screw geometry ------------------------------------------------------

/// atan(l / (pi d)) in degrees.
double lead_angle(double lead_mm, double mean_diameter_mm);

/// atan(mu) in degrees.
double friction_angle(double mu);

struct SelfLockReport {
  double lead_angle_deg = 0.0;
  double friction_angle_deg = 0.0;
  double margin_deg = 0.0;  // friction - lead
  bool locking = false;
};

SelfLockReport self_lock_margin(const ScrewParams& screw);
SelfLockReport self_lock_margin(const WormParams& worm);

/// Axial nut force (N) produced by a screw torque (N mm) when raising load.
double axial_force_from_torque(const ScrewParams& screw, double torque_nmm);

/// Screw torque (N mm) needed to hold an axial load against back-driving.
/// Positive means the screw holds without any drive torque.
double holding_torque(const ScrewParams& screw, double axial_load_n);

// Rocker joints ---------------------------------------------------------------

/// Interior angle psi (rad) opposite the variable side.
double rocker_interior_angle(const RockerGeometry& geom, double travel_mm);

double nut_travel_to_joint_angle(const RockerGeometry& geom, double travel_mm);
double joint_angle_to_nut_travel(const RockerGeometry& geom, double angle_deg,
                                 const JointLimits& limits);

/// Perpendicular distance (mm) from the joint axis to the screw line of action.
double moment_arm(const RockerGeometry& geom, double angle_deg, const JointLimits& limits);

/// Distance (mm) from the joint axis to the nut pivot. This is `b` for the
/// rocker, independent of pose; exposed for comparison with moment_arm.
double nut_center_distance(const RockerGeometry& geom);

/// Solves b and theta0 so that travel 0 maps to min_deg and travel `stroke`
/// maps to max_deg, with `a` and the retracted side length fixed.
RockerGeometry calibrate_rocker(double stroke_mm, double min_deg, double max_deg, double a_mm,
                                double base_length_mm);

/// Rocker with a = b whose interior angle sweeps symmetrically about 90 deg
/// over the stroke. calibrate_rocker recovers it exactly.
RockerGeometry centered_rocker(double stroke_mm, double min_deg, double max_deg);

// Abduction train ---------------------------------------------------------------

struct AbductionAngles {
  std::array<double, kDigitCount> deg{};  // indexed by DigitId; D1 and D3 stay 0
};

AbductionAngles abduction_map(double servo_deg, const AbductionTrain& train);

/// Wheel radius giving `total_deg` of finger travel over the servo range.
double abduction_wheel_radius(const AbductionTrain& train, double worm_pitch_mm,
                              double total_deg);

// Statics -------------------------------------------------------------------------

struct JointForce {
  std::string joint;
  double axial_force_n = 0.0;
  double moment_arm_mm = 0.0;
  double joint_torque_nmm = 0.0;
  double lever_mm = 0.0;
  double tip_force_n = 0.0;
};

struct FingertipForce {
  double force_n = 0.0;
  std::string limiting_joint;
  std::vector<JointForce> joints;
};

/// Weakest-link normal fingertip force for a flexion chain.
///
/// `motor_torques_nmm` follows the digit's leadscrew joints in order.
/// The force is normal to the distal link at `contact_mm` along it.
FingertipForce static_fingertip_force(const HandDescription& desc, DigitId digit,
                                      const HandState& state,
                                      const std::vector<double>& motor_torques_nmm,
                                      double contact_mm);

struct BackDriveReport {
  std::string joint;
  double axial_load_n = 0.0;
  double holding_torque_nmm = 0.0;
  bool self_locking = false;
  double nut_motion_mm = 0.0;
};

/// Nut motion caused by an external normal load at the fingertip with every
/// motor unpowered.
std::vector<BackDriveReport> back_drive_check(const HandDescription& desc, DigitId digit,
                                              const HandState& state, double external_load_n,
                                              double contact_mm);

/// Each flexion joint placed at the middle of its range; everything else neutral.
HandState mid_flexion_state(const HandDescription& desc);

/// Smallest torque (N mm, rounded up to `step`) giving at least `target_n`
/// at mid flexion on every digit with the default contact point.
double calibrate_nominal_torque(const HandDescription& desc, double target_n, double step = 1.0);

}  // namespace hand_twin
