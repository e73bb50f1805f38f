#pragma once

#include "hand_twin/bus.hpp"
#include "hand_twin/kinematics.hpp"
#include "hand_twin/teleop.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace hand_twin::service {

using nlohmann::json;

/// Simulator state behind `serve`. Client messages are applied between
/// steps; telemetry is a deterministic function of the message schedule.
/// Not thread-safe: the transport serializes every call.
class Core {
public:
  explicit Core(HandDescription desc);

  /// Applies one client message and returns the direct reply. Messages
  /// carrying an `id` already seen return the cached reply unchanged.
  json handle(const std::string& text);

  /// Advances the simulation by `dt` seconds and returns a telemetry message.
  json step(double dt);

  /// Current snapshot as served at GET /state.
  json state() const;

  std::uint64_t sequence() const { return seq_; }

private:
  json apply(const json& msg);
  json on_slider(const json& msg);
  json on_drag(const json& msg);
  json on_wrist(const json& msg);
  json on_frame(const json& msg);
  json on_replay(const json& msg);
  json on_selflock(const json& msg);
  void command(int index, double deg);
  json poses_json(const HandState& state) const;

  HandDescription desc_;
  bus::Network net_;
  bus::Master master_;
  teleop::Mapping mapping_;
  HandState commanded_;
  std::array<bool, kDigitCount> reachable_{true, true, true, true, true};
  std::array<double, kDigitCount> drag_residual_{};
  std::uint64_t seq_ = 0;

  std::vector<teleop::RetargetFrame> replay_;
  std::size_t replay_pos_ = 0;
  double replay_clock_ = 0.0;
  bool replay_running_ = false;

  std::unordered_map<std::string, json> replies_;
  std::deque<std::string> reply_order_;
};

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  double publish_hz = 30.0;
  double run_seconds = 0.0;  // 0 runs until stopped
  std::size_t max_queued = 64;  // per-client outgoing messages; oldest dropped first
  /// Called once listening, with the bound port (useful with port 0).
  std::function<void(unsigned short)> on_ready;
  /// Polled at the publish rate; serving stops once it reads true.
  const std::atomic<bool>* stop = nullptr;
};

/// Hosts the simulator over HTTP (GET /state, GET /healthz) and a websocket
/// upgrade at /control. Throws HandError when the port is busy.
void serve(const HandDescription& desc, const ServeOptions& options);

}  // namespace hand_twin::service
