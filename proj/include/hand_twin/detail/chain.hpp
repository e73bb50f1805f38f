#pragma once

#include "hand_twin/model.hpp"

#include <vector>

namespace hand_twin::detail {

struct ChainJoint {
  const Joint* joint = nullptr;
  Vec3 origin = Vec3::Zero();  // base frame
  Vec3 axis = Vec3::UnitZ();   // base frame, unit
  double coefficient = 1.0;    // joint radians per command radian
};

struct Chain {
  std::vector<ChainJoint> joints;
  Vec3 base = Vec3::Zero();
  Vec3 dip = Vec3::Zero();
  Vec3 tip = Vec3::Zero();
  Mat3 tip_rotation = Mat3::Identity();
};

Mat3 rpy_matrix(const Vec3& rpy_deg);

/// Walks one digit without limit checks. Joint angles come from `state`.
Chain walk_digit(const HandDescription& desc, const HandState& state, DigitId digit);

/// Commands that move a digit point, wrist last.
std::vector<int> digit_commands(const HandDescription& desc, DigitId digit);

}  // namespace hand_twin::detail
