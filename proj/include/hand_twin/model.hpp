#pragma once

#include "hand_twin/common.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hand_twin {

// ---------------------------------------------------------------------------
// Commanded degrees of freedom
// ---------------------------------------------------------------------------

/// Index of each independently commanded value in a HandState.
enum Command : int {
  kThumbCmc = 0,
  kThumbMcp,
  kThumbIp,
  kIndexMcp,
  kIndexPip,
  kIndexDip,
  kMiddleMcp,
  kMiddlePip,
  kMiddleDip,
  kRingMcp,
  kRingPip,
  kRingDip,
  kPinkyMcp,
  kPinkyPip,
  kPinkyDip,
  kAbductionServo,
  kWristFe,
  kWristRud,
};

inline constexpr int kCommandCount = 18;
inline constexpr int kJointCount = 20;
inline constexpr int kLeadscrewJointCount = 14;

inline constexpr std::array<std::string_view, kCommandCount> kCommandNames = {
    "thumb_cmc",  "thumb_mcp",  "thumb_ip",        "index_mcp", "index_pip", "index_dip",
    "middle_mcp", "middle_pip", "middle_dip",      "ring_mcp",  "ring_pip",  "ring_dip",
    "pinky_mcp",  "pinky_pip",  "pinky_dip",       "abduction_servo", "wrist_fe", "wrist_rud"};

/// Returns the command index for a name, or -1.
int command_index(std::string_view name);

// ---------------------------------------------------------------------------
// Description types
// ---------------------------------------------------------------------------

enum class DigitId : int { D1 = 0, D2, D3, D4, D5 };
inline constexpr int kDigitCount = 5;

std::string_view digit_label(DigitId id);   // "D1".."D5"
std::optional<DigitId> parse_digit(std::string_view label);

enum class JointType { LeadscrewFlexion, WormCmc, CoupledAbduction };

std::string_view joint_type_name(JointType t);
std::optional<JointType> parse_joint_type(std::string_view name);

struct JointLimits {
  double min_deg = 0.0;
  double max_deg = 0.0;

  double total() const { return max_deg - min_deg; }
  bool contains(double deg, double eps = 0.0) const {
    return deg >= min_deg - eps && deg <= max_deg + eps;
  }
  double clamp(double deg) const;
  bool operator==(const JointLimits&) const = default;
};

/// Power screw (lead screw or worm) parameters.
struct ScrewParams {
  double lead_mm = 0.35;
  double mean_diameter_mm = 2.50;
  double mu = 0.42;
  double stroke_mm = 16.0;
  bool operator==(const ScrewParams&) const = default;
};

/// Variable-length side of the joint triangle.
///
/// The screw anchor sits at distance `a` from the joint axis on the lower
/// link and the nut pivot at distance `b` on the upper link. The third side
/// is `base_length + s` for nut travel `s`, and the interior angle opposite
/// it is psi. The joint angle is `sign * (psi - theta0)`.
struct RockerGeometry {
  double a_mm = 0.0;
  double b_mm = 0.0;
  double theta0_rad = 0.0;
  double base_length_mm = 0.0;
  double stroke_mm = 0.0;
  int sign = 1;
  bool operator==(const RockerGeometry&) const = default;
};

struct WormParams {
  double lead_mm = 2.5;
  double pitch_diameter_mm = 9.49;
  double mu = 0.46;
  double ratio = 30.0;  // wheel teeth per worm start
  bool operator==(const WormParams&) const = default;
};

/// One worm/wheel stage of the shared abduction shaft.
struct AbductionStage {
  DigitId digit = DigitId::D2;
  double worm_pitch_mm = 2.0;
  double wheel_radius_mm = 1.0;
  bool left_handed = false;
  bool operator==(const AbductionStage&) const = default;
};

struct AbductionTrain {
  int pinion_teeth = 12;
  int bevel_teeth = 24;
  JointLimits servo_limits{-270.0, 270.0};
  std::vector<AbductionStage> stages;

  /// Finger abduction degrees per servo degree for one stage.
  double coupling(const AbductionStage& stage) const;
  const AbductionStage* stage_for(DigitId digit) const;
  bool operator==(const AbductionTrain&) const = default;
};

struct Joint {
  std::string name;
  JointType type = JointType::LeadscrewFlexion;
  JointLimits limits;
  Vec3 axis = Vec3::UnitY();             // rotation axis in the preceding frame
  Vec3 offset_rpy_deg = Vec3::Zero();    // fixed rotation applied after the joint
  int link = -1;                         // index into the digit's phalanx links, -1 = none
  int command = -1;                      // HandState index that drives the joint
  RockerGeometry rocker;                 // leadscrew joints only
  bool operator==(const Joint&) const = default;
};

struct Digit {
  DigitId id = DigitId::D1;
  std::string name;
  double length_mm = 0.0;
  double width_mm = 0.0;
  std::array<double, 3> phalanx_fractions{0.45, 0.30, 0.25};
  Vec3 base_position_mm = Vec3::Zero();  // palm frame
  Vec3 base_rpy_deg = Vec3::Zero();
  std::vector<Joint> joints;

  double link_length(int i) const { return phalanx_fractions.at(i) * length_mm; }
  double reach() const;  // sum of phalanx links
  bool operator==(const Digit&) const = default;
};

struct Palm {
  double length_mm = 129.0;
  double width_mm = 92.0;
  bool operator==(const Palm&) const = default;
};

/// Two-actuator parallel wrist around a universal joint at the origin.
///
/// Forearm frame: x distal, y radial, z dorsal. Anchors sit on the dorsal
/// side at azimuth +-anchor_azimuth_deg from +z. The spherical joint axes
/// point along the neutral rod directions, which are inclined axis_tilt_deg
/// from the platform planes.
struct WristGeometry {
  double length_mm = 33.0;            // universal joint to palm base
  double width_mm = 57.9;
  double lower_offset_mm = 10.0;      // lower anchor plane, proximal of the joint
  double upper_offset_mm = 10.0;      // upper anchor plane, distal of the joint
  double lower_radius_mm = 50.0;
  double anchor_azimuth_deg = 45.0;
  double axis_tilt_deg = 30.0;
  double min_length_mm = 30.0;
  double stroke_mm = 26.92;
  double swivel_limit_deg = 40.0;
  double max_dynamic_force_n = 100.0;
  JointLimits fe_limits{-18.0, 52.0};
  JointLimits rud_limits{-18.0, 18.0};

  double upper_radius_mm() const;
  std::array<Vec3, 2> lower_anchors() const;
  std::array<Vec3, 2> upper_anchors() const;  // upper platform frame
  bool operator==(const WristGeometry&) const = default;
};

enum class NodeRole { Master, JointCtl1, JointCtl2, JointCtl3, JointCtl4, Servo, Wrist };
std::string_view node_role_name(NodeRole r);
std::optional<NodeRole> parse_node_role(std::string_view name);

struct NodeSpec {
  NodeRole role = NodeRole::Master;
  int address = 0;
  std::vector<int> commands;  // HandState indices served by this node
  bool operator==(const NodeSpec&) const = default;
};

struct BusConfig {
  double tick_hz = 1000.0;
  int encoder_cpr = 4096;
  double gain_per_s = 50.0;
  double finger_speed_deg_s = 91.5;
  double cmc_speed_deg_s = 91.5;
  double servo_speed_deg_s = 360.0;
  double wrist_speed_deg_s = 60.0;
  double settle_margin_s = 0.2;
  double drop_probability = 0.0;
  std::uint64_t seed = 1;
  int retry_limit = 16;
  std::vector<NodeSpec> nodes;

  double encoder_quantum_deg() const { return 360.0 / encoder_cpr; }
  bool operator==(const BusConfig&) const = default;
};

struct Transmission {
  ScrewParams finger_screw;  // stroke is per joint, see RockerGeometry
  WormParams cmc_worm;
  AbductionTrain abduction;
  double nominal_motor_torque_nmm = 60.0;
  double contact_fraction = 1.0;  // statics contact point along the distal link
  bool operator==(const Transmission&) const = default;
};

/// Full parametric hand. Internal units: millimetres; limits in degrees,
/// rocker offsets in radians. Immutable once loaded.
struct HandDescription {
  Palm palm;
  std::array<Digit, kDigitCount> digits;
  Transmission transmission;
  WristGeometry wrist;
  BusConfig bus;

  const Digit& digit(DigitId id) const { return digits[static_cast<int>(id)]; }
  const Joint* find_joint(std::string_view name) const;
  const Joint& joint_for_command(int command) const;  // leadscrew or CMC joints only
  JointLimits command_limits(int command) const;
  int joint_count() const;
  bool operator==(const HandDescription&) const = default;
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// The 18 commanded values in degrees, indexed by Command.
struct HandState {
  std::array<double, kCommandCount> values{};

  double& operator[](int i) { return values[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
  bool operator==(const HandState&) const = default;
};

/// Throws LimitError naming the first out-of-limits value.
void check_state(const HandDescription& desc, const HandState& state, double eps_deg = 1e-9);
HandState clamp_state(const HandDescription& desc, const HandState& state);

/// Angle of every joint (20) in degrees; abduction joints follow the servo.
double joint_angle_deg(const HandDescription& desc, const HandState& state, const Joint& joint);

struct NutTravel {
  std::string joint;
  double travel_mm = 0.0;
};
std::vector<NutTravel> nut_travels(const HandDescription& desc, const HandState& state);

// ---------------------------------------------------------------------------
// Loading, defaults, scaling
// ---------------------------------------------------------------------------

/// Parses and validates a JSON config document.
HandDescription load_config(std::string_view text);
HandDescription load_config_file(const std::string& path);
std::string serialize_config(const HandDescription& desc);

/// Throws InvariantError on failure; returns non-fatal warnings.
std::vector<std::string> validate(const HandDescription& desc);

HandDescription default_hand();
HandDescription scale_hand(const HandDescription& desc, double factor);

/// Resolves `--config`, then HAND_TWIN_CONFIG, then the built-in default.
HandDescription resolve_config(const std::string& path_flag);

}  // namespace hand_twin
