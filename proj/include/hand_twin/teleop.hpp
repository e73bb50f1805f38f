#pragma once

#include "hand_twin/bus.hpp"
#include "hand_twin/kinematics.hpp"
#include "hand_twin/wrist.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hand_twin::teleop {

/// Malformed or out-of-order trace input. `line()` is 1-based.
class TraceError : public HandError {
public:
  TraceError(std::size_t line, const std::string& what)
      : HandError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

struct FingerTargets {
  Vec3 dip = Vec3::Zero();
  Vec3 tip = Vec3::Zero();
};

/// One glove sample. Positions in mm, glove frame: origin at the glove
/// wrist, x toward the fingers, z dorsal.
struct RetargetFrame {
  std::int64_t t_ms = 0;
  std::array<std::optional<FingerTargets>, kDigitCount> fingers;
  std::optional<WristPose> wrist;
};

/// Glove-to-hand-length ratio of the default anthropometry.
double default_scale(const HandDescription& desc);

struct Mapping {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation_mm = Vec3::Zero();
  double scale = 1.0;
  std::array<bool, kDigitCount> enabled{true, true, true, true, true};
  int smoothing_window = 1;  // frames; 1 disables smoothing

  Vec3 apply(const Vec3& glove) const { return scale * (rotation * glove) + translation_mm; }
  Vec3 invert(const Vec3& hand) const {
    return rotation.transpose() * ((hand - translation_mm) / scale);
  }
  void validate() const;
};

Mapping default_mapping(const HandDescription& desc);

std::vector<RetargetFrame> parse_trace(std::istream& is);
RetargetFrame parse_frame(const std::string& json_text);  // one record, throws TraceError(0)
std::string frame_json(const RetargetFrame& frame);
void write_trace(std::ostream& os, const std::vector<RetargetFrame>& frames);

struct RetargetOptions {
  double ik_tol_mm = 1e-3;
  int max_iter = 200;
  double skip_residual_mm = 5.0;  // frames worse than this are skipped
};

struct RetargetResult {
  HandState state;
  bool skipped = false;
  std::array<double, kDigitCount> finger_residual_mm{};  // worst of DIP/tip per finger
  double residual_mm = 0.0;
  int iterations = 0;
};

RetargetResult retarget_frame(const RetargetFrame& frame, const Mapping& mapping,
                              const HandDescription& desc, const HandState& seed,
                              const RetargetOptions& options = {});

struct CommandLogEntry {
  double t = 0.0;
  int command = 0;
  double target_deg = 0.0;
  bool acked = false;
  bool clamped = false;
};

struct TrackingSample {
  double t = 0.0;
  HandState commanded;
  HandState measured;
  double held_for_s = 0.0;  // time since the commanded state last changed
};

struct PipelineOptions {
  double rate_hz = 60.0;
  double settle_window_s = 1.4;  // samples held this long count as settled
  double tail_s = 1.5;           // simulated time after the last frame
  double stale_after_s = 0.25;
  RetargetOptions retarget;
};

struct PipelineReport {
  std::vector<CommandLogEntry> commands;
  std::vector<TrackingSample> samples;
  std::array<double, kCommandCount> max_tracking_error_deg{};
  std::array<double, kCommandCount> settled_tracking_error_deg{};
  std::size_t frames_processed = 0;
  std::size_t frames_skipped = 0;
  std::size_t stale_events = 0;
  std::size_t bus_faults = 0;
  HandState final_measured;
};

PipelineReport run_pipeline(const std::vector<RetargetFrame>& trace, const Mapping& mapping,
                            const HandDescription& desc, bus::Master& master,
                            const PipelineOptions& options = {});

// Fixtures -------------------------------------------------------------------------

/// Frames whose glove positions are the mapped-back FK of `states`.
std::vector<RetargetFrame> frames_from_states(const HandDescription& desc, const Mapping& mapping,
                                              const std::vector<HandState>& states, double hz);

/// Smooth joint-space sweep, `seconds` long at `hz`.
std::vector<RetargetFrame> sample_sweep_trace(const HandDescription& desc, const Mapping& mapping,
                                              double seconds = 10.0, double hz = 60.0);

struct OppositionSchedule {
  std::vector<HandState> contacts;           // D2..D5 contact states
  std::vector<double> hold_end_s;            // end time of each contact hold
  std::vector<RetargetFrame> frames;
};

/// Thumb meets D2..D5 in turn: each contact is approached over `move_s`
/// and held for `hold_s`.
OppositionSchedule opposition_trace(const HandDescription& desc, const Mapping& mapping,
                                    double hz = 60.0, double move_s = 1.5, double hold_s = 2.0);

}  // namespace hand_twin::teleop
