#include "hand_twin/teleop.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>

namespace hand_twin::teleop {

namespace {

// Summed human reference lengths (palm, five digits, wrist) in mm.
constexpr double kHumanLengthSumMm = 619.1;

using nlohmann::json;

Vec3 vec_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw DomainError(what + " must be [x, y, z]");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw DomainError(what + " must be numeric");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  if (!v.allFinite()) throw DomainError(what + " is not finite");
  return v;
}

RetargetFrame frame_from(const json& j) {
  if (!j.is_object()) throw DomainError("record must be an object");
  RetargetFrame f;
  const auto t = j.find("t_ms");
  if (t == j.end() || !t->is_number_integer()) throw DomainError("t_ms must be an integer");
  f.t_ms = t->get<std::int64_t>();
  const auto fingers = j.find("fingers");
  if (fingers == j.end() || !fingers->is_object()) throw DomainError("fingers must be an object");
  for (const auto& [label, body] : fingers->items()) {
    const auto id = parse_digit(label);
    if (!id) throw DomainError("unknown finger " + label);
    if (!body.is_object() || !body.contains("dip") || !body.contains("tip")) {
      throw DomainError(label + " needs dip and tip");
    }
    f.fingers[static_cast<std::size_t>(*id)] =
        FingerTargets{vec_from(body["dip"], label + ".dip"), vec_from(body["tip"], label + ".tip")};
  }
  if (const auto w = j.find("wrist"); w != j.end() && !w->is_null()) {
    if (!w->is_object() || !w->contains("fe_deg") || !w->contains("rud_deg") ||
        !(*w)["fe_deg"].is_number() || !(*w)["rud_deg"].is_number()) {
      throw DomainError("wrist needs numeric fe_deg and rud_deg");
    }
    f.wrist = WristPose{(*w)["fe_deg"].get<double>(), (*w)["rud_deg"].get<double>()};
    if (!std::isfinite(f.wrist->fe_deg) || !std::isfinite(f.wrist->rud_deg)) {
      throw DomainError("wrist hint is not finite");
    }
  }
  return f;
}

json to_json(const RetargetFrame& f) {
  json fingers = json::object();
  for (int i = 0; i < kDigitCount; ++i) {
    const auto& t = f.fingers[static_cast<std::size_t>(i)];
    if (!t) continue;
    fingers[std::string(digit_label(static_cast<DigitId>(i)))] = {
        {"dip", {t->dip.x(), t->dip.y(), t->dip.z()}},
        {"tip", {t->tip.x(), t->tip.y(), t->tip.z()}}};
  }
  json j = {{"t_ms", f.t_ms}, {"fingers", fingers}};
  if (f.wrist) j["wrist"] = {{"fe_deg", f.wrist->fe_deg}, {"rud_deg", f.wrist->rud_deg}};
  return j;
}

}  // namespace

double default_scale(const HandDescription& desc) {
  double sum = desc.palm.length_mm + desc.wrist.length_mm;
  for (const auto& d : desc.digits) sum += d.length_mm;
  return sum / kHumanLengthSumMm;
}

void Mapping::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("mapping scale must be > 0");
  if (!rotation.allFinite() ||
      !(rotation.transpose() * rotation).isApprox(Mat3::Identity(), 1e-9) ||
      std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw DomainError("mapping rotation must be orthonormal and right-handed");
  }
  if (!translation_mm.allFinite()) throw DomainError("mapping translation is not finite");
  if (smoothing_window < 1) throw DomainError("smoothing window must be >= 1");
}

Mapping default_mapping(const HandDescription& desc) {
  Mapping m;
  m.scale = default_scale(desc);
  return m;
}

// Trace IO ------------------------------------------------------------------------------

std::vector<RetargetFrame> parse_trace(std::istream& is) {
  std::vector<RetargetFrame> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    RetargetFrame f;
    try {
      f = frame_from(json::parse(line));
    } catch (const json::exception& e) {
      throw TraceError(line_no, std::string("malformed record: ") + e.what());
    } catch (const DomainError& e) {
      throw TraceError(line_no, e.what());
    }
    if (!out.empty() && f.t_ms < out.back().t_ms) {
      throw TraceError(line_no, "timestamp " + std::to_string(f.t_ms) + " goes back from " +
                                    std::to_string(out.back().t_ms));
    }
    out.push_back(std::move(f));
  }
  return out;
}

RetargetFrame parse_frame(const std::string& json_text) {
  try {
    return frame_from(json::parse(json_text));
  } catch (const json::exception& e) {
    throw TraceError(0, std::string("malformed record: ") + e.what());
  } catch (const DomainError& e) {
    throw TraceError(0, e.what());
  }
}

std::string frame_json(const RetargetFrame& frame) { return to_json(frame).dump(); }

void write_trace(std::ostream& os, const std::vector<RetargetFrame>& frames) {
  for (const auto& f : frames) os << to_json(f).dump() << '\n';
}

// Retargeting ----------------------------------------------------------------------------

RetargetResult retarget_frame(const RetargetFrame& frame, const Mapping& mapping,
                              const HandDescription& desc, const HandState& seed,
                              const RetargetOptions& options) {
  mapping.validate();
  HandState start = clamp_state(desc, seed);
  if (frame.wrist) {
    start[kWristFe] = desc.wrist.fe_limits.clamp(frame.wrist->fe_deg);
    start[kWristRud] = desc.wrist.rud_limits.clamp(frame.wrist->rud_deg);
  }

  std::vector<IkTarget> targets;
  IkOptions ik;
  ik.tol_mm = options.ik_tol_mm;
  ik.max_iter = options.max_iter;
  ik.active.fill(false);
  for (int i = 0; i < kDigitCount; ++i) {
    const auto& t = frame.fingers[static_cast<std::size_t>(i)];
    if (!t || !mapping.enabled[static_cast<std::size_t>(i)]) continue;
    const auto id = static_cast<DigitId>(i);
    targets.push_back({id, TargetPoint::Dip, mapping.apply(t->dip), kDipWeight});
    targets.push_back({id, TargetPoint::Tip, mapping.apply(t->tip), kTipWeight});
    for (const auto& j : desc.digit(id).joints) {
      if (j.command >= 0) ik.active[static_cast<std::size_t>(j.command)] = true;
    }
  }

  RetargetResult out;
  out.state = start;
  if (targets.empty()) return out;

  const auto r = solve_ik(desc, targets, start, ik);
  out.iterations = r.iterations;
  out.residual_mm = r.residual_mm;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto& slot = out.finger_residual_mm[static_cast<std::size_t>(targets[k].digit)];
    slot = std::max(slot, r.target_residuals[k]);
  }
  if (r.residual_mm > options.skip_residual_mm) {
    out.skipped = true;  // hold the previous command
    out.state = start;
  } else {
    out.state = r.state;
  }
  return out;
}

// Pipeline -----------------------------------------------------------------------------

namespace {

class Smoother {
public:
  explicit Smoother(int window) : window_(static_cast<std::size_t>(std::max(1, window))) {}

  RetargetFrame apply(const RetargetFrame& f) {
    if (window_ == 1) return f;
    history_.push_back(f);
    if (history_.size() > window_) history_.pop_front();
    RetargetFrame out = f;
    for (std::size_t d = 0; d < kDigitCount; ++d) {
      if (!f.fingers[d]) continue;
      FingerTargets sum;
      int n = 0;
      for (const auto& h : history_) {
        if (!h.fingers[d]) continue;
        sum.dip += h.fingers[d]->dip;
        sum.tip += h.fingers[d]->tip;
        ++n;
      }
      out.fingers[d] = FingerTargets{sum.dip / n, sum.tip / n};
    }
    return out;
  }

private:
  std::size_t window_;
  std::deque<RetargetFrame> history_;
};

}  // namespace

PipelineReport run_pipeline(const std::vector<RetargetFrame>& trace, const Mapping& mapping,
                            const HandDescription& desc, bus::Master& master,
                            const PipelineOptions& options) {
  mapping.validate();
  if (!(options.rate_hz > 0.0)) throw DomainError("pipeline rate must be > 0");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].t_ms < trace[i - 1].t_ms) throw TraceError(i + 1, "timestamp regression");
  }

  PipelineReport rep;
  bus::Network& net = master.network();
  if (trace.empty()) {
    rep.final_measured = net.snapshot();
    return rep;
  }

  const double tick_hz = desc.bus.tick_hz;
  const double dt = 1.0 / tick_hz;
  const double quantum = desc.bus.encoder_quantum_deg();
  const auto t0 = trace.front().t_ms;
  auto frame_time = [&](std::size_t i) { return static_cast<double>(trace[i].t_ms - t0) / 1000.0; };
  const double end = frame_time(trace.size() - 1) + options.tail_s;
  const long total_ticks = std::lround(end * tick_hz);
  const long sample_every = std::max(1L, std::lround(tick_hz / options.rate_hz));

  Smoother smoother(mapping.smoothing_window);
  HandState ik_state = net.targets();
  double last_change = 0.0;
  std::size_t next = 0;

  for (long k = 0; k <= total_ticks; ++k) {
    const double now = static_cast<double>(k) * dt;
    while (next < trace.size() && frame_time(next) <= now + 1e-9) {
      if (next > 0 && frame_time(next) - frame_time(next - 1) > options.stale_after_s) {
        ++rep.stale_events;
      }
      const auto result = retarget_frame(smoother.apply(trace[next]), mapping, desc, ik_state,
                                         options.retarget);
      ++rep.frames_processed;
      if (result.skipped) {
        ++rep.frames_skipped;
      } else {
        ik_state = result.state;
        const HandState sent = net.targets();
        for (int c = 0; c < kCommandCount; ++c) {
          if (std::abs(ik_state[c] - sent[c]) <= quantum) continue;
          const auto reply = master.set_target(c, ik_state[c]);
          CommandLogEntry entry{now, c, ik_state[c], reply && reply->ok(),
                                reply && reply->clamped};
          if (!entry.acked) ++rep.bus_faults;
          rep.commands.push_back(entry);
          last_change = now;
        }
      }
      ++next;
    }

    if (k % sample_every == 0) {
      rep.samples.push_back({now, net.targets(), net.snapshot(), now - last_change});
      const auto& s = rep.samples.back();
      for (int c = 0; c < kCommandCount; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const double err = std::abs(s.commanded[c] - s.measured[c]);
        rep.max_tracking_error_deg[ci] = std::max(rep.max_tracking_error_deg[ci], err);
        if (s.held_for_s >= options.settle_window_s) {
          rep.settled_tracking_error_deg[ci] = std::max(rep.settled_tracking_error_deg[ci], err);
        }
      }
    }
    if (k < total_ticks) net.tick(dt);
  }
  rep.final_measured = net.snapshot();
  return rep;
}

// Fixtures ------------------------------------------------------------------------------

std::vector<RetargetFrame> frames_from_states(const HandDescription& desc, const Mapping& mapping,
                                              const std::vector<HandState>& states, double hz) {
  if (!(hz > 0.0)) throw DomainError("frame rate must be > 0");
  std::vector<RetargetFrame> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto poses = forward_kinematics(desc, states[i]);
    RetargetFrame f;
    f.t_ms = std::llround(static_cast<double>(i) * 1000.0 / hz);
    for (const auto& d : poses.digits) {
      f.fingers[static_cast<std::size_t>(d.digit)] =
          FingerTargets{mapping.invert(d.dip.position), mapping.invert(d.tip.position)};
    }
    f.wrist = WristPose{states[i][kWristFe], states[i][kWristRud]};
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<RetargetFrame> sample_sweep_trace(const HandDescription& desc, const Mapping& mapping,
                                              double seconds, double hz) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * hz));
  std::vector<HandState> states;
  states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / hz;
    HandState s;
    for (int c = 0; c < kCommandCount; ++c) {
      const auto lim = desc.command_limits(c);
      const double mid = 0.5 * (lim.min_deg + lim.max_deg);
      // Slow sweep, phase-staggered per joint, starting from mid-range.
      const double phase = 2.0 * kPi * (0.1 * t + 0.05 * c);
      s[c] = mid + 0.35 * lim.total() * (std::sin(phase) - std::sin(2.0 * kPi * 0.05 * c));
      s[c] = lim.clamp(s[c]);
    }
    states.push_back(s);
  }
  return frames_from_states(desc, mapping, states, hz);
}

OppositionSchedule opposition_trace(const HandDescription& desc, const Mapping& mapping,
                                    double hz, double move_s, double hold_s) {
  OppositionSchedule sched;
  const HandState rest = clamp_state(desc, HandState{});
  for (DigitId f : {DigitId::D2, DigitId::D3, DigitId::D4, DigitId::D5}) {
    const auto r = opposition_check(desc, f);
    if (!r.success) {
      throw InfeasibleError(std::string("no opposition contact for ") +
                            std::string(digit_label(f)));
    }
    sched.contacts.push_back(r.state);
  }

  std::vector<HandState> states;
  const auto move_n = static_cast<long>(std::llround(move_s * hz));
  const auto hold_n = static_cast<long>(std::llround(hold_s * hz));
  HandState from = rest;
  states.push_back(from);
  for (const auto& to : sched.contacts) {
    for (long i = 1; i <= move_n; ++i) {
      const double u = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / move_n);
      HandState s;
      for (int c = 0; c < kCommandCount; ++c) s[c] = from[c] + u * (to[c] - from[c]);
      states.push_back(clamp_state(desc, s));
    }
    for (long i = 0; i < hold_n; ++i) states.push_back(to);
    sched.hold_end_s.push_back(static_cast<double>(states.size() - 1) / hz);
    from = to;
  }
  sched.frames = frames_from_states(desc, mapping, states, hz);
  return sched;
}

}  // namespace hand_twin::teleop
