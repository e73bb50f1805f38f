#include "hand_twin/kinematics.hpp"

#include "hand_twin/detail/chain.hpp"

#include <cmath>

namespace hand_twin {

namespace detail {

Mat3 rpy_matrix(const Vec3& rpy_deg) {
  return (Eigen::AngleAxisd(deg2rad(rpy_deg.z()), Vec3::UnitZ()) *
          Eigen::AngleAxisd(deg2rad(rpy_deg.y()), Vec3::UnitY()) *
          Eigen::AngleAxisd(deg2rad(rpy_deg.x()), Vec3::UnitX()))
      .toRotationMatrix();
}

Chain walk_digit(const HandDescription& desc, const HandState& state, DigitId id) {
  const Digit& digit = desc.digit(id);
  const Mat3 wrist = wrist_rotation(state[kWristFe], state[kWristRud]);
  const Vec3 palm_origin = wrist * Vec3(desc.wrist.length_mm, 0.0, 0.0);

  Chain chain;
  Mat3 rot = wrist * rpy_matrix(digit.base_rpy_deg);
  Vec3 pos = palm_origin + wrist * digit.base_position_mm;
  chain.base = pos;
  chain.joints.reserve(digit.joints.size());
  for (const auto& j : digit.joints) {
    ChainJoint cj;
    cj.joint = &j;
    cj.origin = pos;
    cj.axis = rot * j.axis;
    if (j.type == JointType::CoupledAbduction) {
      const auto* stage = desc.transmission.abduction.stage_for(id);
      cj.coefficient = stage ? desc.transmission.abduction.coupling(*stage) : 0.0;
    }
    chain.joints.push_back(cj);
    chain.dip = pos;
    const double angle = deg2rad(joint_angle_deg(desc, state, j));
    rot = rot * Eigen::AngleAxisd(angle, j.axis).toRotationMatrix();
    if (j.offset_rpy_deg != Vec3::Zero()) rot = rot * rpy_matrix(j.offset_rpy_deg);
    if (j.link >= 0) pos += rot * Vec3(digit.link_length(j.link), 0.0, 0.0);
  }
  chain.tip = pos;
  chain.tip_rotation = rot;
  return chain;
}

std::vector<int> digit_commands(const HandDescription& desc, DigitId id) {
  std::vector<int> out;
  for (const auto& j : desc.digit(id).joints) {
    bool seen = false;
    for (int c : out) seen = seen || c == j.command;
    if (!seen) out.push_back(j.command);
  }
  out.push_back(kWristFe);
  out.push_back(kWristRud);
  return out;
}

}  // namespace detail

Mat3 wrist_rotation(double fe_deg, double rud_deg) {
  return (Eigen::AngleAxisd(deg2rad(fe_deg), Vec3::UnitY()) *
          Eigen::AngleAxisd(deg2rad(rud_deg), Vec3::UnitZ()))
      .toRotationMatrix();
}

HandPoses forward_kinematics(const HandDescription& desc, const HandState& state) {
  check_state(desc, state);
  HandPoses out;
  out.palm_rotation = wrist_rotation(state[kWristFe], state[kWristRud]);
  out.palm_origin = out.palm_rotation * Vec3(desc.wrist.length_mm, 0.0, 0.0);
  for (int i = 0; i < kDigitCount; ++i) {
    const auto id = static_cast<DigitId>(i);
    const auto chain = detail::walk_digit(desc, state, id);
    DigitPoses& d = out.digits[static_cast<std::size_t>(i)];
    d.digit = id;
    d.base = chain.base;
    for (const auto& cj : chain.joints) d.joints.push_back(cj.origin);
    d.dip.position = chain.dip;
    d.tip.position = chain.tip;
    d.tip.orientation = Eigen::Quaterniond(chain.tip_rotation).normalized();
  }
  return out;
}

namespace {

Vec3 wrist_column(const HandState& state, int command, const Vec3& point) {
  if (command == kWristFe) return Vec3::UnitY().cross(point);
  const Vec3 axis = Eigen::AngleAxisd(deg2rad(state[kWristFe]), Vec3::UnitY()) * Vec3::UnitZ();
  return axis.cross(point);
}

}  // namespace

Jacobian jacobian(const HandDescription& desc, const HandState& state, DigitId digit,
                  TargetPoint point) {
  check_state(desc, state);
  const auto chain = detail::walk_digit(desc, state, digit);
  const Vec3 p = point == TargetPoint::Tip ? chain.tip : chain.dip;

  Jacobian jac;
  jac.columns = detail::digit_commands(desc, digit);
  jac.matrix.setZero(3, static_cast<Eigen::Index>(jac.columns.size()));
  for (std::size_t c = 0; c < jac.columns.size(); ++c) {
    const int cmd = jac.columns[c];
    Vec3 col = Vec3::Zero();
    if (cmd == kWristFe || cmd == kWristRud) {
      col = wrist_column(state, cmd, p);
    } else {
      for (const auto& cj : chain.joints) {
        if (cj.joint->command != cmd) continue;
        col += cj.coefficient * cj.axis.cross(p - cj.origin);
      }
    }
    jac.matrix.col(static_cast<Eigen::Index>(c)) = col;
  }
  return jac;
}

std::vector<IkTarget> targets_from_poses(const HandPoses& poses) {
  std::vector<IkTarget> out;
  for (const auto& d : poses.digits) {
    out.push_back({d.digit, TargetPoint::Dip, d.dip.position, kDipWeight});
    out.push_back({d.digit, TargetPoint::Tip, d.tip.position, kTipWeight});
  }
  return out;
}

}  // namespace hand_twin
