#pragma once

#include "hand_twin/model.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hand_twin {

struct Pose {
  Vec3 position = Vec3::Zero();                  // mm, hand base (forearm) frame
  std::optional<Eigen::Quaterniond> orientation;
};

struct DigitPoses {
  DigitId digit = DigitId::D1;
  Vec3 base = Vec3::Zero();
  std::vector<Vec3> joints;  // origin of every joint in chain order
  Pose dip;                  // last joint before the tip (IP on the thumb)
  Pose tip;
};

struct HandPoses {
  std::array<DigitPoses, kDigitCount> digits;
  Mat3 palm_rotation = Mat3::Identity();
  Vec3 palm_origin = Vec3::Zero();

  const DigitPoses& digit(DigitId id) const { return digits[static_cast<int>(id)]; }
};

/// Rotation applied by the wrist universal joint: FE about y, then RUD
/// about the rotated z axis.
Mat3 wrist_rotation(double fe_deg, double rud_deg);

HandPoses forward_kinematics(const HandDescription& desc, const HandState& state);

enum class TargetPoint { Dip, Tip };

struct Jacobian {
  Eigen::Matrix<double, 3, Eigen::Dynamic> matrix;  // mm per radian of each command
  std::vector<int> columns;                         // HandState index of each column
};

/// Sensitivity of a digit point to the commands that move it.
Jacobian jacobian(const HandDescription& desc, const HandState& state, DigitId digit,
                  TargetPoint point);

// Inverse kinematics ----------------------------------------------------------------

struct IkTarget {
  DigitId digit = DigitId::D1;
  TargetPoint point = TargetPoint::Tip;
  Vec3 position = Vec3::Zero();
  double weight = 1.0;
};

/// Distance constraint between two digit tips, used for opposition.
struct IkContact {
  DigitId first = DigitId::D1;
  DigitId second = DigitId::D2;
  double weight = 1.0;
};

struct IkOptions {
  double tol_mm = 1e-3;
  int max_iter = 200;
  double damping = 0.05;
  double max_step_rad = 0.1;
  /// Commands the solver may change; others stay at the seed.
  std::array<bool, kCommandCount> active = all_active();
  /// Iterations without relative progress above `plateau_rel` before a
  /// descent counts as stalled. A stalled descent restarts with the
  /// worst-fitting digit resampled; the budget is shared by all restarts and
  /// the target is flagged infeasible if the last descent stalled.
  int plateau_window = 5;
  double plateau_rel = 1e-6;

  static constexpr std::array<bool, kCommandCount> all_active() {
    std::array<bool, kCommandCount> a{};
    for (auto& v : a) v = true;
    return a;
  }
};

enum class IkStatus { Converged, Infeasible, IterationLimit };
std::string_view ik_status_name(IkStatus s);

struct IkResult {
  HandState state;
  IkStatus status = IkStatus::IterationLimit;
  double residual_mm = 0.0;               // largest unweighted target error
  std::vector<double> target_residuals;   // per target, then per contact
  int iterations = 0;
  int restarts = 0;
  std::vector<double> history;            // weighted cost at each improvement

  bool success() const { return status == IkStatus::Converged; }
};

/// Default weights: DIP 1, tip 2.
inline constexpr double kDipWeight = 1.0;
inline constexpr double kTipWeight = 2.0;

IkResult solve_ik(const HandDescription& desc, std::span<const IkTarget> targets,
                  const HandState& seed, const IkOptions& options = {},
                  std::span<const IkContact> contacts = {});

/// DIP and tip targets for every digit, taken from a forward pass.
std::vector<IkTarget> targets_from_poses(const HandPoses& poses);

// Workspace ---------------------------------------------------------------------------

struct WorkspaceCloud {
  DigitId digit = DigitId::D1;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::vector<Vec3> points;
  std::vector<HandState> states;  // the sampled state behind each point
};

/// Uniform samples over the digit's joint-limit box, wrist neutral.
WorkspaceCloud sample_workspace(const HandDescription& desc, DigitId digit, std::size_t n,
                                std::uint64_t seed);

struct ProximityPair {
  std::size_t first = 0;
  std::size_t second = 0;
  double distance_mm = 0.0;
};

/// Pairs of points (one per cloud) closer than `radius_mm`; at most `limit`.
std::vector<ProximityPair> proximity_pairs(const WorkspaceCloud& a, const WorkspaceCloud& b,
                                           double radius_mm, std::size_t limit = 1000);

void write_workspace_csv(std::ostream& os, std::span<const WorkspaceCloud> clouds);
std::vector<std::pair<DigitId, Vec3>> read_workspace_csv(std::istream& is);

/// Compact binary points: "HTWS" magic, u32 version, u64 count, then per
/// point u8 digit + three little-endian f32 coordinates.
void write_workspace_binary(std::ostream& os, std::span<const WorkspaceCloud> clouds);
std::vector<std::pair<DigitId, Vec3>> read_workspace_binary(std::istream& is);

// Opposition ---------------------------------------------------------------------------

struct OppositionResult {
  DigitId finger = DigitId::D2;
  bool success = false;
  double distance_mm = 0.0;
  HandState state;
  int attempts = 0;
};

/// Smallest tolerance opposition can certify; this is the inner IK tolerance.
inline constexpr double kOppositionFloorMm = 1e-3;

struct OppositionOptions {
  double tol_mm = 5.0;
  bool thumb_only = false;
  /// Finger pose for thumb_only; defaults to opposition_finger_pose.
  std::optional<HandState> finger_pose;
  int max_iter = 200;
  int restarts = 16;
  std::uint64_t seed = 7;
};

OppositionResult opposition_check(const HandDescription& desc, DigitId finger,
                                  const OppositionOptions& options = {});

/// Finger pose used for the thumb-only protocol: every flexion at 60% of range.
HandState opposition_finger_pose(const HandDescription& desc, DigitId finger);

// Range of motion ----------------------------------------------------------------------

struct RomRow {
  std::string part;
  std::string joint;
  double hand_deg = 0.0;
  double human_deg = 0.0;
  double delta_deg() const { return hand_deg - human_deg; }
  double relative() const { return (hand_deg - human_deg) / human_deg; }
};

struct RomReport {
  std::vector<RomRow> rows;            // one per joint (20)
  double advantage_with_wrist = 0.0;   // sum-ratio over all joints, fraction
  double advantage_fingers_only = 0.0; // sum-ratio over the five digits
};

RomReport rom_report(const HandDescription& desc);
void write_rom_csv(std::ostream& os, const RomReport& report);
void write_rom_table(std::ostream& os, const RomReport& report);

}  // namespace hand_twin
