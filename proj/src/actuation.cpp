#include "hand_twin/actuation.hpp"

#include "hand_twin/detail/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hand_twin {

namespace {

void check_screw(double lead_mm, double dia_mm, double mu) {
  if (!(dia_mm > 0.0) || !std::isfinite(dia_mm)) throw DomainError("mean diameter must be > 0");
  if (!(lead_mm >= 0.0) || !std::isfinite(lead_mm)) throw DomainError("lead must be >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("friction coefficient must be >= 0");
}

SelfLockReport lock_report(double lead_mm, double dia_mm, double mu) {
  check_screw(lead_mm, dia_mm, mu);
  SelfLockReport r;
  r.lead_angle_deg = lead_angle(lead_mm, dia_mm);
  r.friction_angle_deg = friction_angle(mu);
  r.margin_deg = r.friction_angle_deg - r.lead_angle_deg;
  // Compare the raw arctangents so the verdict carries no rounding slack.
  r.locking = std::atan(mu) > std::atan(lead_mm / (kPi * dia_mm));
  return r;
}

double side_length(const RockerGeometry& g, double psi) {
  return std::sqrt(g.a_mm * g.a_mm + g.b_mm * g.b_mm - 2.0 * g.a_mm * g.b_mm * std::cos(psi));
}

// Interior angle for side length l, no stroke check.
double psi_of(double a, double b, double l) {
  const double c = (a * a + b * b - l * l) / (2.0 * a * b);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

void check_limits_arg(const JointLimits& limits, double deg) {
  if (!std::isfinite(deg) || !limits.contains(deg, 1e-9)) {
    std::ostringstream os;
    os << "joint angle " << deg << " deg outside [" << limits.min_deg << ", " << limits.max_deg
       << "]";
    throw LimitError(os.str());
  }
}

}  // namespace

// Power screw ---------------------------------------------------------------------

double lead_angle(double lead_mm, double mean_diameter_mm) {
  check_screw(lead_mm, mean_diameter_mm, 0.0);
  return rad2deg(std::atan(lead_mm / (kPi * mean_diameter_mm)));
}

double friction_angle(double mu) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("friction coefficient must be >= 0");
  return rad2deg(std::atan(mu));
}

SelfLockReport self_lock_margin(const ScrewParams& s) {
  return lock_report(s.lead_mm, s.mean_diameter_mm, s.mu);
}

SelfLockReport self_lock_margin(const WormParams& w) {
  return lock_report(w.lead_mm, w.pitch_diameter_mm, w.mu);
}

double axial_force_from_torque(const ScrewParams& s, double torque_nmm) {
  check_screw(s.lead_mm, s.mean_diameter_mm, s.mu);
  const double d = s.mean_diameter_mm;
  const double l = s.lead_mm;
  return 2.0 * torque_nmm * (kPi * d - s.mu * l) / (d * (l + kPi * s.mu * d));
}

double holding_torque(const ScrewParams& s, double axial_load_n) {
  check_screw(s.lead_mm, s.mean_diameter_mm, s.mu);
  const double d = s.mean_diameter_mm;
  const double l = s.lead_mm;
  return axial_load_n * d / 2.0 * (kPi * s.mu * d - l) / (kPi * d + s.mu * l);
}

// Rocker --------------------------------------------------------------------------

double rocker_interior_angle(const RockerGeometry& g, double travel_mm) {
  if (!(g.a_mm > 0.0) || !(g.b_mm > 0.0)) throw DomainError("rocker sides must be positive");
  if (!std::isfinite(travel_mm)) throw DomainError("nut travel is not finite");
  const double l = g.base_length_mm + travel_mm;
  const double lo = std::abs(g.a_mm - g.b_mm);
  const double hi = g.a_mm + g.b_mm;
  const double eps = 1e-12 * hi;
  if (l < lo - eps || l > hi + eps) {
    std::ostringstream os;
    os << "side length " << l << " mm outside triangle interval [" << lo << ", " << hi << "]";
    throw TriangleError(os.str());
  }
  if (travel_mm < -1e-12 || travel_mm > g.stroke_mm + 1e-12) {
    std::ostringstream os;
    os << "nut travel " << travel_mm << " mm outside stroke [0, " << g.stroke_mm << "]";
    throw StrokeError(os.str());
  }
  return psi_of(g.a_mm, g.b_mm, l);
}

double nut_travel_to_joint_angle(const RockerGeometry& g, double travel_mm) {
  return rad2deg(g.sign * (rocker_interior_angle(g, travel_mm) - g.theta0_rad));
}

double joint_angle_to_nut_travel(const RockerGeometry& g, double angle_deg,
                                 const JointLimits& limits) {
  check_limits_arg(limits, angle_deg);
  const double psi = g.sign * deg2rad(angle_deg) + g.theta0_rad;
  const double s = side_length(g, psi) - g.base_length_mm;
  return std::clamp(s, 0.0, g.stroke_mm);
}

double moment_arm(const RockerGeometry& g, double angle_deg, const JointLimits& limits) {
  const double s = joint_angle_to_nut_travel(g, angle_deg, limits);
  const double psi = rocker_interior_angle(g, s);
  const double sin_psi = std::sin(psi);
  if (sin_psi < 1e-12) throw DomainError("rocker is collinear; moment arm vanishes");
  return g.a_mm * g.b_mm * sin_psi / (g.base_length_mm + s);
}

double nut_center_distance(const RockerGeometry& g) { return g.b_mm; }

RockerGeometry centered_rocker(double stroke_mm, double min_deg, double max_deg) {
  if (!(stroke_mm > 0.0)) throw DomainError("stroke must be > 0");
  if (!(max_deg > min_deg)) throw DomainError("empty range of motion");
  const double range = deg2rad(max_deg - min_deg);
  if (range >= kPi) throw DomainError("range of motion must stay below 180 deg");
  RockerGeometry g;
  g.a_mm = stroke_mm / (2.0 * std::sqrt(2.0) * std::sin(range / 4.0));
  g.b_mm = g.a_mm;
  const double psi0 = kPi / 2.0 - range / 2.0;
  g.base_length_mm = 2.0 * g.a_mm * std::sin(psi0 / 2.0);
  g.theta0_rad = psi0 - deg2rad(min_deg);
  g.stroke_mm = stroke_mm;
  g.sign = 1;
  return g;
}

RockerGeometry calibrate_rocker(double stroke_mm, double min_deg, double max_deg, double a_mm,
                                double base_length_mm) {
  if (!(stroke_mm > 0.0)) throw DomainError("stroke must be > 0");
  if (!(max_deg > min_deg)) throw DomainError("empty range of motion");
  if (!(a_mm > 0.0)) throw DomainError("rocker a must be > 0");
  if (!(base_length_mm > 0.0)) throw DomainError("retracted side length must be > 0");
  const double range = deg2rad(max_deg - min_deg);
  if (range >= kPi) throw InfeasibleError("range of motion must stay below 180 deg");

  const double l0 = base_length_mm;
  const double l1 = base_length_mm + stroke_mm;
  const double lo = std::max(l1 - a_mm, a_mm - l0);
  const double hi = a_mm + l0;
  if (!(hi > lo)) {
    throw InfeasibleError("no b closes the triangle over the whole stroke for a = " +
                          std::to_string(a_mm));
  }

  auto f = [&](double b) { return psi_of(a_mm, b, l1) - psi_of(a_mm, b, l0) - range; };
  auto dpsi = [&](double b, double l) {
    const double c = (a_mm * a_mm + b * b - l * l) / (2.0 * a_mm * b);
    const double dc = (b * b - a_mm * a_mm + l * l) / (2.0 * a_mm * b * b);
    return -dc / std::sqrt(std::max(1e-300, 1.0 - c * c));
  };
  auto df = [&](double b) { return dpsi(b, l1) - dpsi(b, l0); };

  constexpr int kScan = 4096;
  const double margin = 1e-9 * (hi - lo);
  const double start = lo + margin;
  const double span = (hi - margin) - start;
  std::vector<double> roots;
  double prev_b = start;
  double prev_f = f(prev_b);
  for (int i = 1; i <= kScan; ++i) {
    const double b = start + span * i / kScan;
    const double fb = f(b);
    if (prev_f == 0.0) roots.push_back(prev_b);
    if (prev_f * fb < 0.0) {
      // Safeguarded Newton inside the bracket.
      double x0 = prev_b;
      double x1 = b;
      double f0 = prev_f;
      double x = 0.5 * (x0 + x1);
      for (int it = 0; it < 100; ++it) {
        const double fx = f(x);
        if (std::abs(fx) < 1e-14) break;
        if ((fx < 0.0) == (f0 < 0.0)) {
          x0 = x;
          f0 = fx;
        } else {
          x1 = x;
        }
        const double d = df(x);
        double next = (d != 0.0) ? x - fx / d : 0.5 * (x0 + x1);
        if (!(next > x0 && next < x1)) next = 0.5 * (x0 + x1);
        if (std::abs(next - x) < 1e-10 * std::max(1.0, std::abs(x))) {
          x = next;
          break;
        }
        x = next;
      }
      roots.push_back(x);
    }
    prev_b = b;
    prev_f = fb;
  }
  if (roots.empty()) {
    std::ostringstream os;
    os << "no rocker b in (" << lo << ", " << hi << ") sweeps " << (max_deg - min_deg)
       << " deg over " << stroke_mm << " mm with a = " << a_mm;
    throw InfeasibleError(os.str());
  }

  double best_b = roots.front();
  double best_score = -1.0;
  for (double b : roots) {
    const double score =
        std::min(std::sin(psi_of(a_mm, b, l0)), std::sin(psi_of(a_mm, b, l1)));
    if (score > best_score) {
      best_score = score;
      best_b = b;
    }
  }
  RockerGeometry g;
  g.a_mm = a_mm;
  g.b_mm = best_b;
  g.base_length_mm = l0;
  g.stroke_mm = stroke_mm;
  g.sign = 1;
  g.theta0_rad = psi_of(a_mm, best_b, l0) - deg2rad(min_deg);
  return g;
}

// Abduction -----------------------------------------------------------------------

AbductionAngles abduction_map(double servo_deg, const AbductionTrain& train) {
  if (!std::isfinite(servo_deg) || !train.servo_limits.contains(servo_deg, 1e-9)) {
    std::ostringstream os;
    os << "servo angle " << servo_deg << " deg outside [" << train.servo_limits.min_deg << ", "
       << train.servo_limits.max_deg << "]";
    throw LimitError(os.str());
  }
  AbductionAngles out;
  for (const auto& stage : train.stages) {
    if (stage.digit == DigitId::D3) continue;
    out.deg[static_cast<std::size_t>(stage.digit)] = train.coupling(stage) * servo_deg;
  }
  return out;
}

double abduction_wheel_radius(const AbductionTrain& train, double worm_pitch_mm,
                              double total_deg) {
  if (!(worm_pitch_mm > 0.0)) throw DomainError("worm pitch must be > 0");
  if (!(total_deg > 0.0)) throw DomainError("abduction total must be > 0");
  const double gear = static_cast<double>(train.pinion_teeth) / train.bevel_teeth;
  return gear * worm_pitch_mm * train.servo_limits.total() / (2.0 * kPi * total_deg);
}

// Statics -------------------------------------------------------------------------

namespace {

struct ContactGeometry {
  Vec3 point;
  Vec3 normal;
};

ContactGeometry contact_on_distal(const HandDescription& desc, const detail::Chain& chain,
                                  DigitId digit, double contact_mm) {
  const Digit& d = desc.digit(digit);
  const double distal = d.link_length(2);
  if (!(contact_mm > 0.0) || contact_mm > distal + 1e-9) {
    std::ostringstream os;
    os << "contact point " << contact_mm << " mm is off the distal link (length " << distal
       << " mm)";
    throw DomainError(os.str());
  }
  const Vec3 dir = chain.tip_rotation * Vec3::UnitX();
  const Vec3 axis = chain.joints.back().axis;
  return {chain.dip + contact_mm * dir, axis.cross(dir).normalized()};
}

double lever_about(const detail::ChainJoint& cj, const ContactGeometry& c) {
  return std::abs((c.point - cj.origin).cross(c.normal).dot(cj.axis));
}

std::vector<const detail::ChainJoint*> leadscrew_joints(const detail::Chain& chain) {
  std::vector<const detail::ChainJoint*> out;
  for (const auto& cj : chain.joints) {
    if (cj.joint->type == JointType::LeadscrewFlexion) out.push_back(&cj);
  }
  return out;
}

}  // namespace

FingertipForce static_fingertip_force(const HandDescription& desc, DigitId digit,
                                      const HandState& state,
                                      const std::vector<double>& motor_torques_nmm,
                                      double contact_mm) {
  check_state(desc, state);
  const auto chain = detail::walk_digit(desc, state, digit);
  const auto joints = leadscrew_joints(chain);
  if (motor_torques_nmm.size() != joints.size()) {
    throw DomainError("expected " + std::to_string(joints.size()) + " motor torques, got " +
                      std::to_string(motor_torques_nmm.size()));
  }
  const auto contact = contact_on_distal(desc, chain, digit, contact_mm);

  FingertipForce out;
  out.force_n = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const Joint& j = *joints[i]->joint;
    JointForce jf;
    jf.joint = j.name;
    jf.axial_force_n = axial_force_from_torque(desc.transmission.finger_screw, motor_torques_nmm[i]);
    jf.moment_arm_mm = moment_arm(j.rocker, state[j.command], j.limits);
    jf.joint_torque_nmm = jf.axial_force_n * jf.moment_arm_mm;
    jf.lever_mm = lever_about(*joints[i], contact);
    if (jf.lever_mm < 1e-9) throw DomainError(j.name + ": contact lies on the joint axis");
    jf.tip_force_n = std::abs(jf.joint_torque_nmm) / jf.lever_mm;
    if (jf.tip_force_n < out.force_n) {
      out.force_n = jf.tip_force_n;
      out.limiting_joint = j.name;
    }
    out.joints.push_back(jf);
  }
  if (joints.empty()) out.force_n = 0.0;
  return out;
}

std::vector<BackDriveReport> back_drive_check(const HandDescription& desc, DigitId digit,
                                              const HandState& state, double external_load_n,
                                              double contact_mm) {
  check_state(desc, state);
  const auto chain = detail::walk_digit(desc, state, digit);
  const auto contact = contact_on_distal(desc, chain, digit, contact_mm);
  const auto& screw = desc.transmission.finger_screw;
  const auto& worm = desc.transmission.cmc_worm;

  std::vector<BackDriveReport> out;
  for (const auto& cj : chain.joints) {
    const Joint& j = *cj.joint;
    const double joint_torque = std::abs(external_load_n) * lever_about(cj, contact);
    BackDriveReport r;
    r.joint = j.name;
    if (j.type == JointType::LeadscrewFlexion) {
      r.axial_load_n = joint_torque / moment_arm(j.rocker, state[j.command], j.limits);
      r.holding_torque_nmm = holding_torque(screw, r.axial_load_n);
      r.self_locking = self_lock_margin(screw).locking;
      if (!r.self_locking) {
        // Nothing resists the load: the nut runs back to the retracted end.
        r.nut_motion_mm = joint_angle_to_nut_travel(j.rocker, state[j.command], j.limits);
      }
    } else if (j.type == JointType::WormCmc) {
      // Wheel pitch radius from the tooth count and the worm lead.
      const double wheel_radius = worm.ratio * worm.lead_mm / (2.0 * kPi);
      r.axial_load_n = joint_torque / wheel_radius;
      const ScrewParams as_screw{worm.lead_mm, worm.pitch_diameter_mm, worm.mu, 0.0};
      r.holding_torque_nmm = holding_torque(as_screw, r.axial_load_n);
      r.self_locking = self_lock_margin(worm).locking;
      if (!r.self_locking) r.nut_motion_mm = std::numeric_limits<double>::infinity();
    } else {
      continue;
    }
    out.push_back(r);
  }
  return out;
}

HandState mid_flexion_state(const HandDescription& desc) {
  HandState s;
  for (const auto& d : desc.digits) {
    for (const auto& j : d.joints) {
      if (j.type == JointType::CoupledAbduction) continue;
      s[j.command] = 0.5 * (j.limits.min_deg + j.limits.max_deg);
    }
  }
  s[kAbductionServo] = desc.transmission.abduction.servo_limits.clamp(0.0);
  s[kWristFe] = desc.wrist.fe_limits.clamp(0.0);
  s[kWristRud] = desc.wrist.rud_limits.clamp(0.0);
  return s;
}

double calibrate_nominal_torque(const HandDescription& desc, double target_n, double step) {
  if (!(target_n > 0.0)) throw DomainError("target force must be > 0");
  if (!(step > 0.0)) throw DomainError("torque step must be > 0");
  const HandState mid = mid_flexion_state(desc);
  double needed = 0.0;
  for (const auto& d : desc.digits) {
    std::size_t n = 0;
    for (const auto& j : d.joints) n += j.type == JointType::LeadscrewFlexion ? 1 : 0;
    if (n == 0) continue;
    const double contact = desc.transmission.contact_fraction * d.link_length(2);
    const auto unit = static_fingertip_force(desc, d.id, mid, std::vector<double>(n, 1.0), contact);
    needed = std::max(needed, target_n / unit.force_n);
  }
  return std::ceil(needed / step - 1e-12) * step;
}

}  // namespace hand_twin
