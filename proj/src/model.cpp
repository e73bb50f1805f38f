#include "hand_twin/model.hpp"

#include "hand_twin/actuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

namespace hand_twin {

int command_index(std::string_view name) {
  for (int i = 0; i < kCommandCount; ++i) {
    if (kCommandNames[static_cast<std::size_t>(i)] == name) return i;
  }
  return -1;
}

std::string_view digit_label(DigitId id) {
  static constexpr std::array<std::string_view, kDigitCount> labels = {"D1", "D2", "D3", "D4",
                                                                       "D5"};
  return labels[static_cast<std::size_t>(id)];
}

std::optional<DigitId> parse_digit(std::string_view label) {
  for (int i = 0; i < kDigitCount; ++i) {
    if (digit_label(static_cast<DigitId>(i)) == label) return static_cast<DigitId>(i);
  }
  return std::nullopt;
}

std::string_view joint_type_name(JointType t) {
  switch (t) {
    case JointType::LeadscrewFlexion: return "leadscrew-flexion";
    case JointType::WormCmc: return "worm-cmc";
    case JointType::CoupledAbduction: return "coupled-abduction";
  }
  return "?";
}

std::optional<JointType> parse_joint_type(std::string_view name) {
  for (auto t : {JointType::LeadscrewFlexion, JointType::WormCmc, JointType::CoupledAbduction}) {
    if (joint_type_name(t) == name) return t;
  }
  return std::nullopt;
}

std::string_view node_role_name(NodeRole r) {
  switch (r) {
    case NodeRole::Master: return "master";
    case NodeRole::JointCtl1: return "joint-ctl-1";
    case NodeRole::JointCtl2: return "joint-ctl-2";
    case NodeRole::JointCtl3: return "joint-ctl-3";
    case NodeRole::JointCtl4: return "joint-ctl-4";
    case NodeRole::Servo: return "servo";
    case NodeRole::Wrist: return "wrist";
  }
  return "?";
}

std::optional<NodeRole> parse_node_role(std::string_view name) {
  for (auto r : {NodeRole::Master, NodeRole::JointCtl1, NodeRole::JointCtl2, NodeRole::JointCtl3,
                 NodeRole::JointCtl4, NodeRole::Servo, NodeRole::Wrist}) {
    if (node_role_name(r) == name) return r;
  }
  return std::nullopt;
}

double JointLimits::clamp(double deg) const { return std::clamp(deg, min_deg, max_deg); }

double AbductionTrain::coupling(const AbductionStage& stage) const {
  const double gear = static_cast<double>(pinion_teeth) / static_cast<double>(bevel_teeth);
  const double sign = stage.left_handed ? 1.0 : -1.0;
  return sign * gear * stage.worm_pitch_mm / (2.0 * kPi * stage.wheel_radius_mm);
}

const AbductionStage* AbductionTrain::stage_for(DigitId digit) const {
  for (const auto& s : stages) {
    if (s.digit == digit) return &s;
  }
  return nullptr;
}

double Digit::reach() const {
  return (phalanx_fractions[0] + phalanx_fractions[1] + phalanx_fractions[2]) * length_mm;
}

double WristGeometry::upper_radius_mm() const {
  return lower_radius_mm - (lower_offset_mm + upper_offset_mm) / std::tan(deg2rad(axis_tilt_deg));
}

std::array<Vec3, 2> WristGeometry::lower_anchors() const {
  const double az = deg2rad(anchor_azimuth_deg);
  return {Vec3(-lower_offset_mm, lower_radius_mm * std::sin(az), lower_radius_mm * std::cos(az)),
          Vec3(-lower_offset_mm, -lower_radius_mm * std::sin(az),
               lower_radius_mm * std::cos(az))};
}

std::array<Vec3, 2> WristGeometry::upper_anchors() const {
  const double az = deg2rad(anchor_azimuth_deg);
  const double r = upper_radius_mm();
  return {Vec3(upper_offset_mm, r * std::sin(az), r * std::cos(az)),
          Vec3(upper_offset_mm, -r * std::sin(az), r * std::cos(az))};
}

const Joint* HandDescription::find_joint(std::string_view name) const {
  for (const auto& d : digits) {
    for (const auto& j : d.joints) {
      if (j.name == name) return &j;
    }
  }
  return nullptr;
}

const Joint& HandDescription::joint_for_command(int command) const {
  for (const auto& d : digits) {
    for (const auto& j : d.joints) {
      if (j.command == command && j.type != JointType::CoupledAbduction) return j;
    }
  }
  throw DomainError("command " + std::to_string(command) + " does not drive a single joint");
}

JointLimits HandDescription::command_limits(int command) const {
  switch (command) {
    case kAbductionServo: return transmission.abduction.servo_limits;
    case kWristFe: return wrist.fe_limits;
    case kWristRud: return wrist.rud_limits;
    default: return joint_for_command(command).limits;
  }
}

int HandDescription::joint_count() const {
  int n = 2;  // wrist FE and RUD
  for (const auto& d : digits) n += static_cast<int>(d.joints.size());
  return n;
}

void check_state(const HandDescription& desc, const HandState& state, double eps_deg) {
  for (int i = 0; i < kCommandCount; ++i) {
    const auto lim = desc.command_limits(i);
    if (!std::isfinite(state[i]) || !lim.contains(state[i], eps_deg)) {
      std::ostringstream os;
      os << kCommandNames[static_cast<std::size_t>(i)] << " = " << state[i]
         << " deg outside [" << lim.min_deg << ", " << lim.max_deg << "]";
      throw LimitError(os.str());
    }
  }
}

HandState clamp_state(const HandDescription& desc, const HandState& state) {
  HandState out = state;
  for (int i = 0; i < kCommandCount; ++i) out[i] = desc.command_limits(i).clamp(state[i]);
  return out;
}

double joint_angle_deg(const HandDescription& desc, const HandState& state, const Joint& joint) {
  if (joint.type == JointType::CoupledAbduction) {
    for (const auto& d : desc.digits) {
      for (const auto& j : d.joints) {
        if (&j == &joint) {
          const auto* stage = desc.transmission.abduction.stage_for(d.id);
          if (stage == nullptr) throw InvariantError(joint.name + ": no abduction stage");
          return desc.transmission.abduction.coupling(*stage) * state[kAbductionServo];
        }
      }
    }
    throw DomainError(joint.name + ": joint does not belong to this description");
  }
  return state[joint.command];
}

std::vector<NutTravel> nut_travels(const HandDescription& desc, const HandState& state) {
  std::vector<NutTravel> out;
  for (const auto& d : desc.digits) {
    for (const auto& j : d.joints) {
      if (j.type != JointType::LeadscrewFlexion) continue;
      out.push_back({j.name, joint_angle_to_nut_travel(j.rocker, state[j.command], j.limits)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvariantError(what);
}

void require_positive(double v, const std::string& what) {
  require(std::isfinite(v) && v > 0.0, what + " must be strictly positive");
}

void check_limits(const JointLimits& lim, const std::string& name) {
  require(std::isfinite(lim.min_deg) && std::isfinite(lim.max_deg),
          name + ": limits must be finite");
  require(lim.max_deg > lim.min_deg, name + ": limit interval is empty (max <= min)");
}

}  // namespace

std::vector<std::string> validate(const HandDescription& desc) {
  std::vector<std::string> warnings;

  const int joints = desc.joint_count();
  require(joints == kJointCount, "joint count is " + std::to_string(joints) + ", expected " +
                                     std::to_string(kJointCount));

  require_positive(desc.palm.length_mm, "palm length");
  require_positive(desc.palm.width_mm, "palm width");

  std::array<int, kCommandCount> drivers{};
  int leadscrew = 0;
  int abduction = 0;
  for (int di = 0; di < kDigitCount; ++di) {
    const auto& d = desc.digits[static_cast<std::size_t>(di)];
    require(static_cast<int>(d.id) == di, "digits must be listed D1..D5 in order");
    require_positive(d.length_mm, std::string(digit_label(d.id)) + " length");
    require_positive(d.width_mm, std::string(digit_label(d.id)) + " width");
    double frac = 0.0;
    for (double f : d.phalanx_fractions) {
      require_positive(f, std::string(digit_label(d.id)) + " phalanx fraction");
      frac += f;
    }
    if (std::abs(frac - 1.0) > 1e-9) {
      warnings.push_back(std::string(digit_label(d.id)) + ": phalanx fractions sum to " +
                         std::to_string(frac));
    }
    std::set<int> links;
    for (const auto& j : d.joints) {
      check_limits(j.limits, j.name);
      require(std::abs(j.axis.norm() - 1.0) < 1e-9, j.name + ": axis must be a unit vector");
      require(j.link >= -1 && j.link < 3, j.name + ": link index out of range");
      if (j.link >= 0) require(links.insert(j.link).second, j.name + ": link used twice");
      switch (j.type) {
        case JointType::LeadscrewFlexion: {
          ++leadscrew;
          require(j.command >= 0 && j.command < kAbductionServo, j.name + ": bad command index");
          ++drivers[static_cast<std::size_t>(j.command)];
          const auto& r = j.rocker;
          require_positive(r.a_mm, j.name + ": rocker a");
          require_positive(r.b_mm, j.name + ": rocker b");
          require_positive(r.stroke_mm, j.name + ": stroke");
          require(r.sign == 1 || r.sign == -1, j.name + ": rocker sign must be +-1");
          const double lo = r.base_length_mm;
          const double hi = r.base_length_mm + r.stroke_mm;
          require(lo > std::abs(r.a_mm - r.b_mm) && hi < r.a_mm + r.b_mm,
                  j.name + ": rocker violates the triangle inequality over the stroke");
          const double t0 = nut_travel_to_joint_angle(r, 0.0);
          const double t1 = nut_travel_to_joint_angle(r, r.stroke_mm);
          const double lo_deg = std::min(t0, t1);
          const double hi_deg = std::max(t0, t1);
          require(std::abs(lo_deg - j.limits.min_deg) < 1e-6 &&
                      std::abs(hi_deg - j.limits.max_deg) < 1e-6,
                  j.name + ": rocker endpoints do not match the joint limits");
          break;
        }
        case JointType::WormCmc:
          require(j.command == kThumbCmc, j.name + ": worm joint must drive thumb_cmc");
          ++drivers[kThumbCmc];
          break;
        case JointType::CoupledAbduction: {
          ++abduction;
          require(j.command == kAbductionServo, j.name + ": abduction joint must follow the servo");
          require(d.id != DigitId::D3, "D3 carries no abduction coupling");
          const auto* stage = desc.transmission.abduction.stage_for(d.id);
          require(stage != nullptr, j.name + ": no abduction stage for this digit");
          const double k = desc.transmission.abduction.coupling(*stage);
          const auto& servo = desc.transmission.abduction.servo_limits;
          const double a = k * servo.min_deg;
          const double b = k * servo.max_deg;
          require(std::abs(std::min(a, b) - j.limits.min_deg) < 1e-6 &&
                      std::abs(std::max(a, b) - j.limits.max_deg) < 1e-6,
                  j.name + ": servo range and coupling do not reproduce the joint limits");
          break;
        }
      }
    }
  }
  require(leadscrew == kLeadscrewJointCount,
          "leadscrew joint count is " + std::to_string(leadscrew) + ", expected 14");
  require(abduction == 3, "coupled abduction joint count is " + std::to_string(abduction) +
                              ", expected 3");
  for (int i = 0; i < kAbductionServo; ++i) {
    require(drivers[static_cast<std::size_t>(i)] == 1,
            std::string(kCommandNames[static_cast<std::size_t>(i)]) +
                " must be driven by exactly one joint");
  }

  const auto& t = desc.transmission;
  require_positive(t.finger_screw.lead_mm, "finger screw lead");
  require_positive(t.finger_screw.mean_diameter_mm, "finger screw diameter");
  require(t.finger_screw.mu >= 0.0, "finger screw friction must be non-negative");
  require_positive(t.cmc_worm.lead_mm, "CMC worm lead");
  require_positive(t.cmc_worm.pitch_diameter_mm, "CMC worm pitch diameter");
  require_positive(t.cmc_worm.mu, "CMC worm friction");
  require_positive(t.cmc_worm.ratio, "CMC worm ratio");
  require(t.abduction.pinion_teeth > 0 && t.abduction.bevel_teeth > 0, "gear teeth must be > 0");
  check_limits(t.abduction.servo_limits, "abduction_servo");
  for (const auto& s : t.abduction.stages) {
    require_positive(s.worm_pitch_mm, "abduction worm pitch");
    require_positive(s.wheel_radius_mm, "abduction wheel radius");
  }
  require(t.nominal_motor_torque_nmm >= 0.0, "nominal motor torque must be non-negative");
  require(t.contact_fraction > 0.0 && t.contact_fraction <= 1.0,
          "contact fraction must be in (0, 1]");

  const auto& w = desc.wrist;
  require_positive(w.length_mm, "wrist length");
  require_positive(w.stroke_mm, "wrist stroke");
  require_positive(w.min_length_mm, "wrist minimum length");
  require_positive(w.lower_radius_mm, "wrist lower anchor radius");
  require(w.upper_radius_mm() > 0.0, "wrist upper anchor radius must be positive");
  require(w.swivel_limit_deg >= 0.0 && w.swivel_limit_deg < 90.0,
          "wrist swivel limit must be in [0, 90)");
  require(w.axis_tilt_deg > 0.0 && w.axis_tilt_deg < 90.0, "wrist axis tilt must be in (0, 90)");
  check_limits(w.fe_limits, "wrist_fe");
  check_limits(w.rud_limits, "wrist_rud");
  const auto lo = w.lower_anchors();
  const auto up = w.upper_anchors();
  require((lo[0] - lo[1]).norm() > 1e-9 && (up[0] - up[1]).norm() > 1e-9,
          "wrist anchors must not coincide");

  const auto& b = desc.bus;
  require_positive(b.tick_hz, "bus tick rate");
  require(b.encoder_cpr > 0, "encoder counts per revolution must be positive");
  require_positive(b.gain_per_s, "bus controller gain");
  require_positive(b.finger_speed_deg_s, "finger speed");
  require(b.drop_probability >= 0.0 && b.drop_probability < 1.0,
          "drop probability must be in [0, 1)");
  std::set<int> addresses;
  std::array<int, kCommandCount> served{};
  int masters = 0;
  for (const auto& n : b.nodes) {
    require(n.address > 0 && n.address < 128, "node address must be 7-bit and non-zero");
    require(addresses.insert(n.address).second, "duplicate node address");
    if (n.role == NodeRole::Master) {
      ++masters;
      require(n.commands.empty(), "master serves no joints");
    }
    for (int c : n.commands) {
      require(c >= 0 && c < kCommandCount, "node joint index out of range");
      ++served[static_cast<std::size_t>(c)];
    }
  }
  require(masters == 1, "exactly one master node is required");
  for (int i = 0; i < kCommandCount; ++i) {
    require(served[static_cast<std::size_t>(i)] == 1,
            std::string(kCommandNames[static_cast<std::size_t>(i)]) +
                " must be served by exactly one bus node");
  }
  return warnings;
}

// ---------------------------------------------------------------------------
// Defaults
// ---------------------------------------------------------------------------

namespace {

// Frozen output of calibrate_wrist for the default layout (see the
// `calibrate --wrist` subcommand).
constexpr double kWristLowerRadiusMm = 50.819588340195331;
constexpr double kWristMinLengthMm = 36.574025881355318;

// Frozen output of calibrate_nominal_torque at 10 N.
constexpr double kNominalTorqueNmm = 43.0;

Joint flexion(const std::string& name, int command, double total_deg, double stroke_mm, int link,
              const Vec3& axis) {
  Joint j;
  j.name = name;
  j.type = JointType::LeadscrewFlexion;
  j.limits = {0.0, total_deg};
  j.axis = axis;
  j.link = link;
  j.command = command;
  j.rocker = centered_rocker(stroke_mm, 0.0, total_deg);
  return j;
}

Joint abduction(const std::string& name, double total_deg) {
  Joint j;
  j.name = name;
  j.type = JointType::CoupledAbduction;
  j.limits = {-total_deg / 2.0, total_deg / 2.0};
  j.axis = Vec3::UnitZ();
  j.link = -1;
  j.command = kAbductionServo;
  return j;
}

Digit finger(DigitId id, const std::string& name, double length_mm, double y_mm,
             std::optional<double> abduction_total, std::array<double, 3> totals, int first_cmd,
             double palm_length) {
  Digit d;
  d.id = id;
  d.name = name;
  d.length_mm = length_mm;
  d.width_mm = 19.0;
  d.base_position_mm = Vec3(palm_length, y_mm, 0.0);
  if (abduction_total) d.joints.push_back(abduction(name + "_abduction", *abduction_total));
  d.joints.push_back(flexion(name + "_mcp", first_cmd, totals[0], 20.0, 0, Vec3::UnitY()));
  d.joints.push_back(flexion(name + "_pip", first_cmd + 1, totals[1], 16.0, 1, Vec3::UnitY()));
  d.joints.push_back(flexion(name + "_dip", first_cmd + 2, totals[2], 16.0, 2, Vec3::UnitY()));
  return d;
}

}  // namespace

HandDescription default_hand() {
  HandDescription h;
  h.palm = {129.0, 92.0};
  const double spacing = h.palm.width_mm / 4.0;

  Digit thumb;
  thumb.id = DigitId::D1;
  thumb.name = "thumb";
  thumb.length_mm = 122.3;
  thumb.width_mm = 25.9;
  thumb.base_position_mm = Vec3(30.0, 20.0, -20.0);
  {
    Joint cmc;
    cmc.name = "thumb_cmc";
    cmc.type = JointType::WormCmc;
    cmc.limits = {0.0, 106.24};
    cmc.axis = Vec3(-std::cos(deg2rad(30.0)), std::sin(deg2rad(30.0)), 0.0);
    cmc.offset_rpy_deg = Vec3(0.0, 0.0, 50.0);
    cmc.link = 0;
    cmc.command = kThumbCmc;
    thumb.joints.push_back(cmc);
    thumb.joints.push_back(flexion("thumb_mcp", kThumbMcp, 52.72, 20.0, 1, -Vec3::UnitZ()));
    thumb.joints.push_back(flexion("thumb_ip", kThumbIp, 45.02, 16.0, 2, -Vec3::UnitZ()));
  }
  h.digits[0] = thumb;
  h.digits[1] = finger(DigitId::D2, "index", 130.1, 1.5 * spacing, 26.73,
                       {103.13, 75.07, 68.09}, kIndexMcp, h.palm.length_mm);
  h.digits[2] = finger(DigitId::D3, "middle", 102.5, 0.5 * spacing, std::nullopt,
                       {101.92, 73.46, 73.04}, kMiddleMcp, h.palm.length_mm);
  h.digits[3] = finger(DigitId::D4, "ring", 130.9, -0.5 * spacing, 26.73,
                       {100.56, 72.93, 73.57}, kRingMcp, h.palm.length_mm);
  h.digits[4] = finger(DigitId::D5, "pinky", 122.0, -1.5 * spacing, 39.37,
                       {98.93, 72.03, 72.05}, kPinkyMcp, h.palm.length_mm);

  auto& t = h.transmission;
  t.finger_screw = {0.35, 2.50, 0.42, 20.0};
  t.cmc_worm = {2.5, 9.49, 0.46, 30.0};
  t.abduction.pinion_teeth = 12;
  t.abduction.bevel_teeth = 24;
  t.abduction.servo_limits = {-270.0, 270.0};
  t.abduction.stages = {
      {DigitId::D2, 2.0, abduction_wheel_radius(t.abduction, 2.0, 26.73), true},
      {DigitId::D4, 2.0, abduction_wheel_radius(t.abduction, 2.0, 26.73), false},
      {DigitId::D5, 2.63, abduction_wheel_radius(t.abduction, 2.63, 39.37), false},
  };
  t.nominal_motor_torque_nmm = kNominalTorqueNmm;
  t.contact_fraction = 1.0;

  auto& w = h.wrist;
  w.length_mm = 33.0;
  w.width_mm = 57.9;
  w.lower_offset_mm = 10.0;
  w.upper_offset_mm = 10.0;
  w.lower_radius_mm = kWristLowerRadiusMm;
  w.anchor_azimuth_deg = 45.0;
  w.axis_tilt_deg = 30.0;
  w.min_length_mm = kWristMinLengthMm;
  w.stroke_mm = 26.92;
  w.swivel_limit_deg = 40.0;
  w.max_dynamic_force_n = 100.0;
  w.fe_limits = {-18.0, 52.0};
  w.rud_limits = {-18.0, 18.0};

  auto& b = h.bus;
  b.nodes = {
      {NodeRole::Master, 0x10, {}},
      {NodeRole::JointCtl1, 0x20, {kThumbCmc, kThumbMcp, kThumbIp}},
      {NodeRole::JointCtl2, 0x21, {kIndexMcp, kIndexPip, kIndexDip, kMiddleMcp}},
      {NodeRole::JointCtl3, 0x22, {kMiddlePip, kMiddleDip, kRingMcp, kRingPip}},
      {NodeRole::JointCtl4, 0x23, {kRingDip, kPinkyMcp, kPinkyPip, kPinkyDip}},
      {NodeRole::Servo, 0x30, {kAbductionServo}},
      {NodeRole::Wrist, 0x40, {kWristFe, kWristRud}},
  };
  return h;
}

HandDescription scale_hand(const HandDescription& desc, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw DomainError("scale factor must be positive, got " + std::to_string(factor));
  }
  HandDescription h = desc;
  h.palm.length_mm *= factor;
  h.palm.width_mm *= factor;
  for (auto& d : h.digits) {
    d.length_mm *= factor;
    d.width_mm *= factor;
    d.base_position_mm *= factor;
    for (auto& j : d.joints) {
      j.rocker.a_mm *= factor;
      j.rocker.b_mm *= factor;
      j.rocker.base_length_mm *= factor;
      j.rocker.stroke_mm *= factor;
    }
  }
  auto& t = h.transmission;
  t.finger_screw.lead_mm *= factor;
  t.finger_screw.mean_diameter_mm *= factor;
  t.finger_screw.stroke_mm *= factor;
  t.cmc_worm.lead_mm *= factor;
  t.cmc_worm.pitch_diameter_mm *= factor;
  for (auto& s : t.abduction.stages) {
    s.worm_pitch_mm *= factor;
    s.wheel_radius_mm *= factor;
  }
  auto& w = h.wrist;
  w.length_mm *= factor;
  w.width_mm *= factor;
  w.lower_offset_mm *= factor;
  w.upper_offset_mm *= factor;
  w.lower_radius_mm *= factor;
  w.min_length_mm *= factor;
  w.stroke_mm *= factor;
  return h;
}

HandDescription resolve_config(const std::string& path_flag) {
  if (!path_flag.empty()) return load_config_file(path_flag);
  if (const char* env = std::getenv("HAND_TWIN_CONFIG"); env != nullptr && *env != '\0') {
    return load_config_file(env);
  }
  return default_hand();
}

}  // namespace hand_twin
