#pragma once

#include "hand_twin/model.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hand_twin::bus {

// Wire format ---------------------------------------------------------------------
//
// 8 bytes: address, command, joint, payload (int32 little-endian), checksum.
// The checksum is the XOR of the first seven bytes. Angles travel as signed
// micro-degrees.

inline constexpr std::size_t kFrameSize = 8;
using RawFrame = std::array<std::uint8_t, kFrameSize>;

enum class Op : std::uint8_t {
  SetTarget = 0x01,
  ReadEncoder = 0x02,
  ReadTarget = 0x03,
  SetDrive = 0x04,  // payload 0 disables, non-zero enables
  Reset = 0x05,
};

/// Reply command byte: 0x80 | op for ack, with 0x40 set when the target was
/// clamped. Faults use 0xFF with the fault code in the joint byte.
inline constexpr std::uint8_t kAckBit = 0x80;
inline constexpr std::uint8_t kClampBit = 0x40;
inline constexpr std::uint8_t kFaultCommand = 0xFF;

enum class Fault : std::uint8_t {
  None = 0,
  BadChecksum = 1,
  UnknownAddress = 2,
  UnknownCommand = 3,
  UnknownJoint = 4,
};

std::string_view fault_name(Fault f);

struct BusFrame {
  std::uint8_t address = 0;
  std::uint8_t command = 0;
  std::uint8_t joint = 0;
  std::int32_t payload = 0;

  RawFrame encode() const;
  bool operator==(const BusFrame&) const = default;
};

std::uint8_t checksum(const RawFrame& raw);
/// Decodes without validating the checksum or command.
BusFrame decode(const RawFrame& raw);
bool checksum_ok(const RawFrame& raw);

std::int32_t to_micro(double value);
double from_micro(std::int32_t micro);

BusFrame make_set_target(std::uint8_t address, int joint, double deg);
BusFrame make_read_encoder(std::uint8_t address, int joint);

struct Reply {
  RawFrame raw{};
  Fault fault = Fault::None;
  bool clamped = false;
  double value = 0.0;  // applied target or measured angle, degrees

  bool ok() const { return fault == Fault::None; }
};

// Simulation -----------------------------------------------------------------------

struct MotorChannel {
  int command = 0;
  JointLimits limits;
  double target_deg = 0.0;
  double true_deg = 0.0;
  double measured_deg = 0.0;  // quantized encoder reading
  double max_speed_deg_s = 91.5;
  double gain_per_s = 50.0;
  double quantum_deg = 360.0 / 4096.0;
  bool drive_enabled = true;
  bool self_locking = true;
  bool clamped = false;
};

struct TelemetryRecord {
  double t = 0.0;
  int joint = 0;
  double target_deg = 0.0;
  double measured_deg = 0.0;
  std::uint32_t flags = 0;
};

inline constexpr std::uint32_t kFlagClamped = 1u << 0;
inline constexpr std::uint32_t kFlagDriveOff = 1u << 1;
inline constexpr std::uint32_t kFlagAtTarget = 1u << 2;

std::string telemetry_json(const TelemetryRecord& r);
void write_telemetry_jsonl(std::ostream& os, const std::vector<TelemetryRecord>& records);
std::vector<TelemetryRecord> read_telemetry_jsonl(std::istream& is);

struct Node {
  NodeRole role = NodeRole::Master;
  std::uint8_t address = 0;
  std::vector<int> commands;
};

/// Tick-driven network of joint controllers. Not thread-safe.
class Network {
public:
  explicit Network(const HandDescription& desc);

  /// Routes one raw frame and returns the reply frame. Every call produces
  /// exactly one reply (ack or fault).
  Reply send(const RawFrame& raw);
  Reply send(const BusFrame& frame) { return send(frame.encode()); }

  /// Advances every channel by dt seconds; returns records for channels
  /// whose measured value or target changed.
  std::vector<TelemetryRecord> tick(double dt);

  /// Ticks at the configured rate until `duration` has elapsed.
  std::vector<TelemetryRecord> run_for(double duration);

  HandState snapshot() const;
  HandState targets() const;
  void reset();

  /// External torque (N mm) on a joint for one tick. Self-locking channels
  /// with the drive disabled do not move.
  void apply_external_torque(int command, double torque_nmm);

  double time() const { return time_; }
  const MotorChannel& channel(int command) const { return channels_.at(command); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::optional<std::uint8_t> address_of(int command) const;
  double quantum_deg() const { return quantum_; }
  double max_speed(int command) const { return channels_.at(command).max_speed_deg_s; }

private:
  Reply fault(Fault f, std::uint8_t joint);
  Reply ack(std::uint8_t address, std::uint8_t op, std::uint8_t joint, double value, bool clamped);

  std::vector<Node> nodes_;
  std::array<MotorChannel, kCommandCount> channels_;
  std::array<double, kCommandCount> pending_torque_{};
  std::array<double, kCommandCount> last_reported_measured_{};
  std::array<double, kCommandCount> last_reported_target_{};
  double time_ = 0.0;
  double tick_dt_ = 1e-3;
  double quantum_ = 360.0 / 4096.0;
};

/// Sole bus initiator. In lossy mode a seeded channel drops request or reply
/// frames; the master retransmits until an ack arrives or retries run out.
class Master {
public:
  Master(Network& net, double drop_probability, std::uint64_t seed, int retry_limit);

  /// Returns the final reply; `std::nullopt` when every attempt was lost.
  std::optional<Reply> transact(const BusFrame& frame);

  /// SetTarget addressed to the node that owns `command`.
  std::optional<Reply> set_target(int command, double deg);
  std::optional<Reply> read_encoder(int command);

  std::uint64_t sent() const { return sent_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t retransmits() const { return retransmits_; }
  Network& network() { return net_; }

private:
  bool lost();

  Network& net_;
  double drop_probability_;
  int retry_limit_;
  std::mt19937_64 rng_;
  std::uint64_t sent_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t retransmits_ = 0;
};

/// Rate-limited first-order response of one channel starting at `start`,
/// evaluated at time t after a step to `target` (continuous-time reference).
double rate_limited_reference(double start, double target, double max_speed, double gain,
                              double t);

}  // namespace hand_twin::bus
