#include "hand_twin/bus.hpp"

#include "hand_twin/actuation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace hand_twin::bus {

std::string_view fault_name(Fault f) {
  switch (f) {
    case Fault::None: return "none";
    case Fault::BadChecksum: return "bad-checksum";
    case Fault::UnknownAddress: return "unknown-address";
    case Fault::UnknownCommand: return "unknown-command";
    case Fault::UnknownJoint: return "unknown-joint";
  }
  return "?";
}

// Wire format ---------------------------------------------------------------------

std::uint8_t checksum(const RawFrame& raw) {
  std::uint8_t x = 0;
  for (std::size_t i = 0; i + 1 < kFrameSize; ++i) x ^= raw[i];
  return x;
}

bool checksum_ok(const RawFrame& raw) { return checksum(raw) == raw[kFrameSize - 1]; }

RawFrame BusFrame::encode() const {
  RawFrame raw{};
  raw[0] = address;
  raw[1] = command;
  raw[2] = joint;
  const auto u = static_cast<std::uint32_t>(payload);
  for (int i = 0; i < 4; ++i) raw[3 + i] = static_cast<std::uint8_t>(u >> (8 * i));
  raw[7] = checksum(raw);
  return raw;
}

BusFrame decode(const RawFrame& raw) {
  BusFrame f;
  f.address = raw[0];
  f.command = raw[1];
  f.joint = raw[2];
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(raw[3 + i]) << (8 * i);
  f.payload = static_cast<std::int32_t>(u);
  return f;
}

std::int32_t to_micro(double value) {
  const double m = std::round(value * 1e6);
  const double lim = static_cast<double>(std::numeric_limits<std::int32_t>::max());
  return static_cast<std::int32_t>(std::clamp(m, -lim, lim));
}

double from_micro(std::int32_t micro) { return static_cast<double>(micro) * 1e-6; }

BusFrame make_set_target(std::uint8_t address, int joint, double deg) {
  return {address, static_cast<std::uint8_t>(Op::SetTarget), static_cast<std::uint8_t>(joint),
          to_micro(deg)};
}

BusFrame make_read_encoder(std::uint8_t address, int joint) {
  return {address, static_cast<std::uint8_t>(Op::ReadEncoder), static_cast<std::uint8_t>(joint),
          0};
}

// Dynamics ------------------------------------------------------------------------

namespace {

// Exact solution of de/dt = -clamp(k e, -v, v) over dt.
double advance(double theta, double target, double v, double k, double dt) {
  const double e0 = target - theta;
  double a = std::abs(e0);
  const double s = e0 < 0.0 ? -1.0 : 1.0;
  if (a == 0.0 || dt <= 0.0) return theta;
  if (k <= 0.0) {
    a = std::max(0.0, a - v * dt);
  } else {
    const double e_sat = v / k;
    if (a > e_sat) {
      const double t_lin = (a - e_sat) / v;
      a = dt <= t_lin ? a - v * dt : e_sat * std::exp(-k * (dt - t_lin));
    } else {
      a *= std::exp(-k * dt);
    }
  }
  return target - s * a;
}

}  // namespace

double rate_limited_reference(double start, double target, double max_speed, double gain,
                              double t) {
  return advance(start, target, max_speed, gain, t);
}

// Telemetry -----------------------------------------------------------------------

namespace {

nlohmann::json flags_json(std::uint32_t flags) {
  auto out = nlohmann::json::array();
  if (flags & kFlagClamped) out.push_back("clamped");
  if (flags & kFlagDriveOff) out.push_back("drive_off");
  if (flags & kFlagAtTarget) out.push_back("at_target");
  return out;
}

nlohmann::json record_json(const TelemetryRecord& r) {
  return {{"t", r.t},
          {"joint", kCommandNames.at(static_cast<std::size_t>(r.joint))},
          {"target_deg", r.target_deg},
          {"measured_deg", r.measured_deg},
          {"flags", flags_json(r.flags)}};
}

}  // namespace

std::string telemetry_json(const TelemetryRecord& r) { return record_json(r).dump(); }

void write_telemetry_jsonl(std::ostream& os, const std::vector<TelemetryRecord>& records) {
  for (const auto& r : records) os << record_json(r).dump() << '\n';
}

std::vector<TelemetryRecord> read_telemetry_jsonl(std::istream& is) {
  std::vector<TelemetryRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TelemetryRecord r;
      r.t = j.at("t").get<double>();
      r.joint = command_index(j.at("joint").get<std::string>());
      if (r.joint < 0) throw DomainError("unknown joint");
      r.target_deg = j.at("target_deg").get<double>();
      r.measured_deg = j.at("measured_deg").get<double>();
      for (const auto& f : j.at("flags")) {
        const auto name = f.get<std::string>();
        if (name == "clamped") r.flags |= kFlagClamped;
        else if (name == "drive_off") r.flags |= kFlagDriveOff;
        else if (name == "at_target") r.flags |= kFlagAtTarget;
        else throw DomainError("unknown flag " + name);
      }
      out.push_back(r);
    } catch (const std::exception& e) {
      throw DomainError("telemetry line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// Network -------------------------------------------------------------------------

namespace {

double quantize(const MotorChannel& c, double deg) {
  return c.limits.clamp(std::round(deg / c.quantum_deg) * c.quantum_deg);
}

}  // namespace

Network::Network(const HandDescription& desc) {
  const auto& cfg = desc.bus;
  tick_dt_ = 1.0 / cfg.tick_hz;
  quantum_ = cfg.encoder_quantum_deg();
  const bool screw_locks = self_lock_margin(desc.transmission.finger_screw).locking;
  const bool worm_locks = self_lock_margin(desc.transmission.cmc_worm).locking;
  for (int i = 0; i < kCommandCount; ++i) {
    MotorChannel& c = channels_[static_cast<std::size_t>(i)];
    c.command = i;
    c.limits = desc.command_limits(i);
    c.gain_per_s = cfg.gain_per_s;
    c.quantum_deg = quantum_;
    if (i == kThumbCmc) {
      c.max_speed_deg_s = cfg.cmc_speed_deg_s;
      c.self_locking = worm_locks;
    } else if (i == kAbductionServo) {
      c.max_speed_deg_s = cfg.servo_speed_deg_s;
      c.self_locking = false;
    } else if (i == kWristFe || i == kWristRud) {
      c.max_speed_deg_s = cfg.wrist_speed_deg_s;
      c.self_locking = false;
    } else {
      c.max_speed_deg_s = cfg.finger_speed_deg_s;
      c.self_locking = screw_locks;
    }
  }
  for (const auto& spec : cfg.nodes) {
    nodes_.push_back({spec.role, static_cast<std::uint8_t>(spec.address), spec.commands});
  }
  reset();
}

void Network::reset() {
  time_ = 0.0;
  for (auto& c : channels_) {
    c.target_deg = c.limits.clamp(0.0);
    c.true_deg = c.target_deg;
    c.measured_deg = quantize(c, c.true_deg);
    c.drive_enabled = true;
    c.clamped = false;
  }
  pending_torque_.fill(0.0);
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    last_reported_measured_[i] = channels_[i].measured_deg;
    last_reported_target_[i] = channels_[i].target_deg;
  }
}

std::optional<std::uint8_t> Network::address_of(int command) const {
  for (const auto& n : nodes_) {
    for (int c : n.commands) {
      if (c == command) return n.address;
    }
  }
  return std::nullopt;
}

Reply Network::fault(Fault f, std::uint8_t joint) {
  Reply r;
  r.fault = f;
  r.raw = BusFrame{0x00, kFaultCommand, static_cast<std::uint8_t>(f), joint}.encode();
  return r;
}

Reply Network::ack(std::uint8_t address, std::uint8_t op, std::uint8_t joint, double value,
                   bool clamped) {
  Reply r;
  r.clamped = clamped;
  r.value = value;
  const auto cmd = static_cast<std::uint8_t>(kAckBit | op | (clamped ? kClampBit : 0));
  r.raw = BusFrame{address, cmd, joint, to_micro(value)}.encode();
  return r;
}

Reply Network::send(const RawFrame& raw) {
  if (!checksum_ok(raw)) return fault(Fault::BadChecksum, raw[2]);
  const BusFrame f = decode(raw);
  const Node* node = nullptr;
  for (const auto& n : nodes_) {
    if (n.address == f.address && n.role != NodeRole::Master) node = &n;
  }
  if (node == nullptr) return fault(Fault::UnknownAddress, f.joint);
  if (f.command < static_cast<std::uint8_t>(Op::SetTarget) ||
      f.command > static_cast<std::uint8_t>(Op::Reset)) {
    return fault(Fault::UnknownCommand, f.joint);
  }
  const auto op = static_cast<Op>(f.command);
  if (op == Op::Reset) {
    for (int cmd : node->commands) {
      auto& c = channels_.at(static_cast<std::size_t>(cmd));
      c.target_deg = c.limits.clamp(0.0);
      c.drive_enabled = true;
      c.clamped = false;
    }
    return ack(f.address, f.command, f.joint, 0.0, false);
  }
  if (f.joint >= node->commands.size()) return fault(Fault::UnknownJoint, f.joint);
  auto& c = channels_.at(static_cast<std::size_t>(node->commands[f.joint]));

  switch (op) {
    case Op::SetTarget: {
      const double want = from_micro(f.payload);
      const double applied = c.limits.clamp(want);
      c.clamped = applied != want;
      c.target_deg = applied;
      return ack(f.address, f.command, f.joint, applied, c.clamped);
    }
    case Op::ReadEncoder:
      return ack(f.address, f.command, f.joint, c.measured_deg, false);
    case Op::ReadTarget:
      return ack(f.address, f.command, f.joint, c.target_deg, c.clamped);
    case Op::SetDrive:
      c.drive_enabled = f.payload != 0;
      return ack(f.address, f.command, f.joint, c.drive_enabled ? 1.0 : 0.0, false);
    case Op::Reset:
      break;
  }
  return fault(Fault::UnknownCommand, f.joint);
}

void Network::apply_external_torque(int command, double torque_nmm) {
  pending_torque_.at(static_cast<std::size_t>(command)) += torque_nmm;
}

std::vector<TelemetryRecord> Network::tick(double dt) {
  std::vector<TelemetryRecord> out;
  if (!(dt >= 0.0)) throw DomainError("tick dt must be >= 0");
  if (dt == 0.0) {
    pending_torque_.fill(0.0);
    return out;
  }
  time_ += dt;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    auto& c = channels_[i];
    const double torque = pending_torque_[i];
    if (c.drive_enabled) {
      c.true_deg = advance(c.true_deg, c.target_deg, c.max_speed_deg_s, c.gain_per_s, dt);
    } else if (torque != 0.0 && !c.self_locking) {
      // Back-driven at most at the channel speed in the torque direction.
      const double dir = torque > 0.0 ? 1.0 : -1.0;
      c.true_deg = c.limits.clamp(c.true_deg + dir * c.max_speed_deg_s * dt);
    }
    c.measured_deg = quantize(c, c.true_deg);

    if (c.measured_deg != last_reported_measured_[i] || c.target_deg != last_reported_target_[i]) {
      TelemetryRecord r;
      r.t = time_;
      r.joint = c.command;
      r.target_deg = c.target_deg;
      r.measured_deg = c.measured_deg;
      if (c.clamped) r.flags |= kFlagClamped;
      if (!c.drive_enabled) r.flags |= kFlagDriveOff;
      if (std::abs(c.measured_deg - c.target_deg) <= c.quantum_deg) r.flags |= kFlagAtTarget;
      out.push_back(r);
      last_reported_measured_[i] = c.measured_deg;
      last_reported_target_[i] = c.target_deg;
    }
  }
  pending_torque_.fill(0.0);
  return out;
}

std::vector<TelemetryRecord> Network::run_for(double duration) {
  std::vector<TelemetryRecord> out;
  const auto n = static_cast<long>(std::llround(duration / tick_dt_));
  for (long i = 0; i < n; ++i) {
    auto batch = tick(tick_dt_);
    out.insert(out.end(), batch.begin(), batch.end());
  }
  return out;
}

HandState Network::snapshot() const {
  HandState s;
  for (std::size_t i = 0; i < channels_.size(); ++i) s.values[i] = channels_[i].measured_deg;
  return s;
}

HandState Network::targets() const {
  HandState s;
  for (std::size_t i = 0; i < channels_.size(); ++i) s.values[i] = channels_[i].target_deg;
  return s;
}

// Master --------------------------------------------------------------------------

Master::Master(Network& net, double drop_probability, std::uint64_t seed, int retry_limit)
    : net_(net), drop_probability_(drop_probability), retry_limit_(retry_limit), rng_(seed) {
  if (!(drop_probability >= 0.0 && drop_probability < 1.0)) {
    throw DomainError("drop probability must be in [0, 1)");
  }
  if (retry_limit < 1) throw DomainError("retry limit must be >= 1");
}

bool Master::lost() {
  if (drop_probability_ <= 0.0) return false;
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return u < drop_probability_;
}

std::optional<Reply> Master::transact(const BusFrame& frame) {
  const RawFrame raw = frame.encode();
  for (int attempt = 0; attempt < retry_limit_; ++attempt) {
    if (attempt > 0) ++retransmits_;
    ++sent_;
    if (lost()) {
      ++dropped_;
      continue;
    }
    Reply reply = net_.send(raw);
    if (lost()) {
      ++dropped_;
      continue;
    }
    return reply;
  }
  return std::nullopt;
}

namespace {

// Node address and channel slot of a command.
std::pair<std::uint8_t, int> route(const Network& net, int command) {
  for (const auto& n : net.nodes()) {
    for (std::size_t k = 0; k < n.commands.size(); ++k) {
      if (n.commands[k] == command) return {n.address, static_cast<int>(k)};
    }
  }
  throw DomainError("no node serves command " + std::to_string(command));
}

}  // namespace

std::optional<Reply> Master::set_target(int command, double deg) {
  const auto [addr, slot] = route(net_, command);
  return transact(make_set_target(addr, slot, deg));
}

std::optional<Reply> Master::read_encoder(int command) {
  const auto [addr, slot] = route(net_, command);
  return transact(make_read_encoder(addr, slot));
}

}  // namespace hand_twin::bus
