#include "hand_twin/service.hpp"

#include "hand_twin/actuation.hpp"

#include <cmath>
#include <sstream>

namespace hand_twin::service {

namespace {

constexpr std::size_t kReplyCacheSize = 1024;
constexpr double kDragTolMm = 1e-3;

json error_reply(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json state_json(const HandState& s) {
  json out = json::object();
  for (int i = 0; i < kCommandCount; ++i) out[std::string(kCommandNames[static_cast<std::size_t>(i)])] = s[i];
  return out;
}

json lock_json(const SelfLockReport& r) {
  return {{"lead_angle_deg", r.lead_angle_deg},
          {"friction_angle_deg", r.friction_angle_deg},
          {"margin_deg", r.margin_deg},
          {"locking", r.locking}};
}

int joint_of(const json& msg) {
  const auto it = msg.find("joint");
  if (it == msg.end()) throw DomainError("missing joint");
  if (it->is_number_integer()) {
    const int i = it->get<int>();
    if (i < 0 || i >= kCommandCount) throw DomainError("joint index out of range");
    return i;
  }
  if (it->is_string()) {
    const int i = command_index(it->get<std::string>());
    if (i < 0) throw DomainError("unknown joint " + it->get<std::string>());
    return i;
  }
  throw DomainError("joint must be a name or index");
}

double number_of(const json& msg, const char* key) {
  const auto it = msg.find(key);
  if (it == msg.end() || !it->is_number()) throw DomainError(std::string("missing number ") + key);
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw DomainError(std::string(key) + " is not finite");
  return v;
}

DigitId finger_of(const json& msg) {
  const auto it = msg.find("finger");
  if (it == msg.end() || !it->is_string()) throw DomainError("missing finger");
  const auto id = parse_digit(it->get<std::string>());
  if (!id) throw DomainError("unknown finger " + it->get<std::string>());
  return *id;
}

}  // namespace

Core::Core(HandDescription desc)
    : desc_(std::move(desc)),
      net_(desc_),
      master_(net_, 0.0, desc_.bus.seed, desc_.bus.retry_limit),
      mapping_(teleop::default_mapping(desc_)),
      commanded_(net_.targets()) {}

json Core::handle(const std::string& text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception& e) {
    return error_reply("parse", e.what());
  }
  if (!msg.is_object()) return error_reply("bad_request", "message must be an object");

  std::string id;
  if (const auto it = msg.find("id"); it != msg.end()) {
    if (!it->is_string() && !it->is_number_integer()) {
      return error_reply("bad_request", "id must be a string or integer");
    }
    id = it->is_string() ? it->get<std::string>() : std::to_string(it->get<std::int64_t>());
    if (const auto hit = replies_.find(id); hit != replies_.end()) return hit->second;
  }

  json reply;
  try {
    reply = apply(msg);
  } catch (const HandError& e) {
    reply = error_reply("bad_request", e.what());
  } catch (const json::exception& e) {
    reply = error_reply("bad_request", e.what());
  }
  if (!id.empty()) {
    reply["id"] = msg["id"];
    replies_[id] = reply;
    reply_order_.push_back(id);
    if (reply_order_.size() > kReplyCacheSize) {
      replies_.erase(reply_order_.front());
      reply_order_.pop_front();
    }
  }
  return reply;
}

json Core::apply(const json& msg) {
  const auto type = msg.find("type");
  if (type == msg.end()) {
    // Bare trace records are live frames.
    if (msg.contains("t_ms")) return on_frame(msg);
    throw DomainError("missing type");
  }
  if (!type->is_string()) throw DomainError("type must be a string");
  const auto t = type->get<std::string>();
  if (t == "slider") return on_slider(msg);
  if (t == "drag") return on_drag(msg);
  if (t == "wrist") return on_wrist(msg);
  if (t == "frame") return on_frame(msg.contains("frame") ? msg["frame"] : msg);
  if (t == "replay") return on_replay(msg);
  if (t == "selflock") return on_selflock(msg);
  return error_reply("unknown_type", "unknown message type " + t);
}

void Core::command(int index, double deg) {
  const auto reply = master_.set_target(index, deg);
  if (reply && reply->ok()) commanded_[index] = reply->value;
}

json Core::on_slider(const json& msg) {
  const int joint = joint_of(msg);
  const double deg = number_of(msg, "deg");
  command(joint, deg);
  return {{"type", "ack"},
          {"joint", kCommandNames[static_cast<std::size_t>(joint)]},
          {"applied_deg", commanded_[joint]},
          {"clamped", net_.channel(joint).clamped}};
}

json Core::on_drag(const json& msg) {
  const DigitId finger = finger_of(msg);
  const auto it = msg.find("tip");
  if (it == msg.end()) throw DomainError("missing tip");
  Vec3 tip;
  if (!it->is_array() || it->size() != 3) throw DomainError("tip must be [x, y, z]");
  for (std::size_t i = 0; i < 3; ++i) tip[static_cast<int>(i)] = (*it)[i].get<double>();
  if (!tip.allFinite()) throw DomainError("tip is not finite");

  // Tip only: the DIP follows from the solved chain.
  IkOptions opt;
  opt.tol_mm = kDragTolMm;
  opt.active.fill(false);
  for (const auto& j : desc_.digit(finger).joints) {
    if (j.command >= 0) opt.active[static_cast<std::size_t>(j.command)] = true;
  }
  const std::array<IkTarget, 1> targets{IkTarget{finger, TargetPoint::Tip, tip, 1.0}};
  const auto r = solve_ik(desc_, targets, commanded_, opt);
  const bool reachable = r.status == IkStatus::Converged;
  const auto f = static_cast<std::size_t>(finger);
  reachable_[f] = reachable;
  drag_residual_[f] = r.residual_mm;
  if (reachable) {
    for (int c = 0; c < kCommandCount; ++c) {
      if (opt.active[static_cast<std::size_t>(c)] && r.state[c] != commanded_[c]) {
        command(c, r.state[c]);
      }
    }
  }
  return {{"type", "ik"},
          {"finger", digit_label(finger)},
          {"reachable", reachable},
          {"residual_mm", r.residual_mm},
          {"status", ik_status_name(r.status)},
          {"iterations", r.iterations}};
}

json Core::on_wrist(const json& msg) {
  const WristPose pose{number_of(msg, "fe_deg"), number_of(msg, "rud_deg")};
  const auto s = wrist_solve(desc_.wrist, pose);
  if (s.feasible()) {
    command(kWristFe, pose.fe_deg);
    command(kWristRud, pose.rud_deg);
  }
  return {{"type", "ack"},
          {"feasible", s.feasible()},
          {"binding", s.binding},
          {"rod_length_mm", {s.length_mm[0], s.length_mm[1]}},
          {"applied", {{"fe_deg", commanded_[kWristFe]}, {"rud_deg", commanded_[kWristRud]}}}};
}

json Core::on_frame(const json& msg) {
  const auto frame = teleop::parse_frame(msg.dump());
  const auto r = teleop::retarget_frame(frame, mapping_, desc_, commanded_);
  if (!r.skipped) {
    for (int c = 0; c < kCommandCount; ++c) {
      if (std::abs(r.state[c] - commanded_[c]) > net_.quantum_deg()) command(c, r.state[c]);
    }
  }
  json residuals = json::object();
  for (int i = 0; i < kDigitCount; ++i) {
    if (frame.fingers[static_cast<std::size_t>(i)]) {
      residuals[std::string(digit_label(static_cast<DigitId>(i)))] =
          r.finger_residual_mm[static_cast<std::size_t>(i)];
    }
  }
  return {{"type", "retarget"},
          {"t_ms", frame.t_ms},
          {"skipped", r.skipped},
          {"residual_mm", r.residual_mm},
          {"finger_residual_mm", residuals}};
}

json Core::on_replay(const json& msg) {
  const auto action = msg.value("action", std::string{});
  if (action == "load") {
    std::vector<teleop::RetargetFrame> frames;
    if (const auto it = msg.find("frames"); it != msg.end() && it->is_array()) {
      std::ostringstream os;
      for (const auto& rec : *it) os << rec.dump() << '\n';
      std::istringstream is(os.str());
      frames = teleop::parse_trace(is);
    } else if (msg.value("trace", std::string{}) == "opposition") {
      frames = teleop::opposition_trace(desc_, mapping_).frames;
    } else if (msg.value("trace", std::string{}) == "sample") {
      frames = teleop::sample_sweep_trace(desc_, mapping_);
    } else {
      throw DomainError("load needs frames or trace \"opposition\" / \"sample\"");
    }
    replay_ = std::move(frames);
    replay_pos_ = 0;
    replay_clock_ = 0.0;
    replay_running_ = false;
  } else if (action == "start") {
    if (replay_.empty()) throw DomainError("no trace loaded");
    if (replay_pos_ >= replay_.size()) {
      replay_pos_ = 0;
      replay_clock_ = 0.0;
    }
    replay_running_ = true;
  } else if (action == "stop") {
    replay_running_ = false;
  } else {
    throw DomainError("replay action must be load, start or stop");
  }
  return {{"type", "ack"},
          {"replay",
           {{"running", replay_running_}, {"position", replay_pos_}, {"length", replay_.size()}}}};
}

json Core::on_selflock(const json&) {
  return {{"type", "selflock"},
          {"finger_screw", lock_json(self_lock_margin(desc_.transmission.finger_screw))},
          {"cmc_worm", lock_json(self_lock_margin(desc_.transmission.cmc_worm))}};
}

json Core::poses_json(const HandState& state) const {
  const auto poses = forward_kinematics(desc_, state);
  json out = json::object();
  for (const auto& d : poses.digits) {
    json joints = json::array();
    for (const auto& j : d.joints) joints.push_back(vec_json(j));
    out[std::string(digit_label(d.digit))] = {{"base", vec_json(d.base)},
                                              {"joints", joints},
                                              {"dip", vec_json(d.dip.position)},
                                              {"tip", vec_json(d.tip.position)}};
  }
  return out;
}

json Core::state() const {
  const HandState measured = net_.snapshot();
  json flags = json::object();
  for (int c = 0; c < kCommandCount; ++c) {
    const auto& ch = net_.channel(c);
    json f = json::array();
    if (ch.clamped) f.push_back("clamped");
    if (!ch.drive_enabled) f.push_back("drive_off");
    if (std::abs(ch.measured_deg - ch.target_deg) <= ch.quantum_deg) f.push_back("at_target");
    flags[std::string(kCommandNames[static_cast<std::size_t>(c)])] = f;
  }
  json reach = json::object();
  json resid = json::object();
  for (int i = 0; i < kDigitCount; ++i) {
    const std::string label(digit_label(static_cast<DigitId>(i)));
    reach[label] = reachable_[static_cast<std::size_t>(i)];
    resid[label] = drag_residual_[static_cast<std::size_t>(i)];
  }
  return {{"type", "state"},
          {"seq", seq_},
          {"t", net_.time()},
          {"target", state_json(net_.targets())},
          {"measured", state_json(measured)},
          {"flags", flags},
          {"poses", poses_json(measured)},
          {"reachable", reach},
          {"drag_residual_mm", resid},
          {"self_lock",
           {{"finger_screw", self_lock_margin(desc_.transmission.finger_screw).margin_deg},
            {"cmc_worm", self_lock_margin(desc_.transmission.cmc_worm).margin_deg}}},
          {"replay",
           {{"running", replay_running_}, {"position", replay_pos_}, {"length", replay_.size()}}}};
}

json Core::step(double dt) {
  if (!(dt > 0.0)) throw DomainError("step must be > 0");
  const double tick = 1.0 / desc_.bus.tick_hz;
  const auto n = std::max(1L, std::lround(dt / tick));
  const double t0 = replay_.empty() ? 0.0 : static_cast<double>(replay_.front().t_ms) / 1000.0;
  for (long i = 0; i < n; ++i) {
    if (replay_running_) {
      replay_clock_ += tick;
      while (replay_pos_ < replay_.size() &&
             static_cast<double>(replay_[replay_pos_].t_ms) / 1000.0 - t0 <= replay_clock_ + 1e-9) {
        const auto r = teleop::retarget_frame(replay_[replay_pos_], mapping_, desc_, commanded_);
        if (!r.skipped) {
          for (int c = 0; c < kCommandCount; ++c) {
            if (std::abs(r.state[c] - commanded_[c]) > net_.quantum_deg()) command(c, r.state[c]);
          }
        }
        ++replay_pos_;
      }
      if (replay_pos_ >= replay_.size()) replay_running_ = false;
    }
    net_.tick(tick);
  }
  ++seq_;
  json out = state();
  out["type"] = "telemetry";
  return out;
}

}  // namespace hand_twin::service
