#include "hand_twin/teleop.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace hand_twin;
using namespace hand_twin::teleop;

namespace {

std::vector<RetargetFrame> load(const std::string& name) {
  std::ifstream in(std::string(HAND_TWIN_DATA_DIR "/traces/") + name);
  REQUIRE(in.good());
  return parse_trace(in);
}

HandState random_state(const HandDescription& h, std::mt19937_64& rng) {
  HandState s;
  for (int c = 0; c < kCommandCount; ++c) {
    const auto lim = h.command_limits(c);
    s[c] = std::uniform_real_distribution<double>(lim.min_deg, lim.max_deg)(rng);
  }
  return s;
}

RetargetFrame scaled(RetargetFrame f, double k) {
  for (auto& ft : f.fingers) {
    if (!ft) continue;
    ft->dip *= k;
    ft->tip *= k;
  }
  return f;
}

}  // namespace

TEST_CASE("trace parsing") {
  std::istringstream empty("");
  CHECK(parse_trace(empty).empty());

  std::istringstream blank("\n\n");
  CHECK(parse_trace(blank).empty());

  const auto frames = load("sample.jsonl");
  REQUIRE(frames.size() == 600);
  for (std::size_t i = 1; i < frames.size(); ++i) CHECK(frames[i].t_ms >= frames[i - 1].t_ms);
  CHECK(frames.back().t_ms - frames.front().t_ms == doctest::Approx(599.0 * 1000.0 / 60.0).epsilon(1e-3));

  std::istringstream back(R"({"t_ms":10,"fingers":{}}
{"t_ms":20,"fingers":{}}
{"t_ms":15,"fingers":{}}
)");
  try {
    parse_trace(back);
    FAIL("expected a trace error");
  } catch (const TraceError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::istringstream bad(R"({"t_ms":10,"fingers":{"D2":{"dip":[1,2],"tip":[1,2,3]}}})");
  CHECK_THROWS_AS(parse_trace(bad), TraceError);
  std::istringstream junk("{\"t_ms\":1,\"fingers\":{}}\nnope\n");
  try {
    parse_trace(junk);
    FAIL("expected a trace error");
  } catch (const TraceError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("frame json round trip") {
  const auto frames = load("opposition.jsonl");
  for (std::size_t i = 0; i < frames.size(); i += 97) {
    const auto back = parse_frame(frame_json(frames[i]));
    CHECK(back.t_ms == frames[i].t_ms);
    for (int d = 0; d < kDigitCount; ++d) {
      REQUIRE(back.fingers[d].has_value() == frames[i].fingers[d].has_value());
      if (back.fingers[d]) CHECK((back.fingers[d]->tip - frames[i].fingers[d]->tip).norm() < 1e-9);
    }
  }
}

TEST_CASE("bundled traces match the generators") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  auto same = [](const std::vector<RetargetFrame>& a, const std::vector<RetargetFrame>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].t_ms == b[i].t_ms);
      for (int d = 0; d < kDigitCount; ++d) {
        REQUIRE(a[i].fingers[d].has_value() == b[i].fingers[d].has_value());
        if (!a[i].fingers[d]) continue;
        worst = std::max(worst, (a[i].fingers[d]->dip - b[i].fingers[d]->dip).norm());
        worst = std::max(worst, (a[i].fingers[d]->tip - b[i].fingers[d]->tip).norm());
      }
    }
    CHECK(worst < 1e-9);
  };
  same(load("sample.jsonl"), sample_sweep_trace(desc, mapping));
  same(load("opposition.jsonl"), opposition_trace(desc, mapping).frames);
}

TEST_CASE("default mapping") {
  const auto desc = default_hand();
  const auto m = default_mapping(desc);
  // Length sums of the anthropometry table: 76.98 cm against 61.91 cm.
  CHECK(m.scale == doctest::Approx(769.8 / 619.1));
  CHECK(std::abs(m.scale - 1.24) < 0.01);
  CHECK_NOTHROW(m.validate());
  auto bad = m;
  bad.scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = m;
  bad.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = m;
  bad.rotation = -Mat3::Identity();
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("retarget recovers a known pose") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    auto q = random_state(desc, rng);
    const auto f = frames_from_states(desc, mapping, {q}, 60.0).front();
    // Wrist comes from the hints, so seed it from them.
    HandState seed;
    const auto r = retarget_frame(f, mapping, desc, seed);
    CHECK_FALSE(r.skipped);
    CHECK(r.residual_mm < 1e-3);
    const auto p = forward_kinematics(desc, r.state);
    const auto pq = forward_kinematics(desc, q);
    for (int d = 0; d < kDigitCount; ++d) {
      CHECK((p.digits[d].tip.position - pq.digits[d].tip.position).norm() < 1e-3);
    }
    CHECK(r.state[kWristFe] == doctest::Approx(q[kWristFe]));
  }
}

TEST_CASE("retarget is scale invariant") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  std::mt19937_64 rng(4);
  const auto q = random_state(desc, rng);
  const auto f = frames_from_states(desc, mapping, {q}, 60.0).front();
  const auto ref = retarget_frame(f, mapping, desc, HandState{});
  for (double k : {0.5, 3.0}) {
    auto m = mapping;
    m.scale /= k;
    const auto r = retarget_frame(scaled(f, k), m, desc, HandState{});
    for (int c = 0; c < kCommandCount; ++c) CHECK(r.state[c] == doctest::Approx(ref.state[c]).epsilon(1e-9));
  }
}

TEST_CASE("unreachable frame is skipped and the seed held") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  RetargetFrame f;
  f.fingers[1] = FingerTargets{Vec3(900, 0, 0), Vec3(1000, 0, 0)};
  HandState seed;
  seed[kIndexMcp] = 12.0;
  const auto r = retarget_frame(f, mapping, desc, seed);
  CHECK(r.skipped);
  CHECK(r.state == seed);
  CHECK(r.residual_mm > 5.0);
}

TEST_CASE("empty trace pipeline") {
  const auto desc = default_hand();
  bus::Network net(desc);
  bus::Master master(net, 0.0, 1, 4);
  const auto rep = run_pipeline({}, default_mapping(desc), desc, master);
  CHECK(rep.commands.empty());
  CHECK(rep.samples.empty());
  CHECK(rep.frames_processed == 0);
}

TEST_CASE("constant pose settles within one quantum") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  std::mt19937_64 rng(9);
  const auto q = random_state(desc, rng);
  auto frames = frames_from_states(desc, mapping, std::vector<HandState>(120, q), 60.0);
  bus::Network net(desc);
  bus::Master master(net, 0.0, 1, 4);
  PipelineOptions opt;
  opt.tail_s = 3.0;
  const auto rep = run_pipeline(frames, mapping, desc, master, opt);
  CHECK(rep.frames_skipped == 0);
  const double quantum = desc.bus.encoder_quantum_deg();
  for (int c = 0; c < kCommandCount; ++c) {
    CHECK(rep.settled_tracking_error_deg[c] <= quantum);
    CHECK(std::abs(rep.final_measured[c] - rep.samples.back().commanded[c]) <= quantum);
  }
}

TEST_CASE("opposition trace end to end") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  const auto sched = opposition_trace(desc, mapping);
  const auto frames = load("opposition.jsonl");
  REQUIRE(frames.size() == sched.frames.size());
  REQUIRE(sched.hold_end_s.size() == 4);

  bus::Network net(desc);
  bus::Master master(net, 0.0, 1, 4);
  const auto rep = run_pipeline(frames, mapping, desc, master);
  CHECK(rep.frames_skipped == 0);
  CHECK(rep.bus_faults == 0);

  const DigitId fingers[] = {DigitId::D2, DigitId::D3, DigitId::D4, DigitId::D5};
  const double quantum = desc.bus.encoder_quantum_deg();
  for (std::size_t i = 0; i < 4; ++i) {
    // Last sample at or before the end of the hold.
    const TrackingSample* at = nullptr;
    for (const auto& s : rep.samples) {
      if (s.t <= sched.hold_end_s[i] + 1e-9) at = &s;
    }
    REQUIRE(at != nullptr);
    const auto p = forward_kinematics(desc, at->measured);
    const double gap =
        (p.digit(DigitId::D1).tip.position - p.digit(fingers[i]).tip.position).norm();
    CAPTURE(i);
    CHECK(gap <= 5.0);
    for (int c = 0; c < kCommandCount; ++c) {
      CHECK(std::abs(at->measured[c] - at->commanded[c]) <= quantum);
    }
  }
  for (int c = 0; c < kCommandCount; ++c) CHECK(rep.settled_tracking_error_deg[c] <= quantum);
}

TEST_CASE("pipeline determinism and whole-trace scale invariance") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  auto frames = load("sample.jsonl");
  frames.resize(180);
  auto run = [&](const std::vector<RetargetFrame>& tr, const Mapping& m, double drop) {
    bus::Network net(desc);
    bus::Master master(net, drop, 5, 16);
    return run_pipeline(tr, m, desc, master);
  };
  const auto a = run(frames, mapping, 0.0);
  const auto b = run(frames, mapping, 0.0);
  REQUIRE(a.commands.size() == b.commands.size());
  for (std::size_t i = 0; i < a.commands.size(); ++i) {
    CHECK(a.commands[i].target_deg == b.commands[i].target_deg);
  }

  std::vector<RetargetFrame> big;
  for (const auto& f : frames) big.push_back(scaled(f, 2.0));
  auto m2 = mapping;
  m2.scale /= 2.0;
  const auto c = run(big, m2, 0.0);
  REQUIRE(c.commands.size() == a.commands.size());
  for (std::size_t i = 0; i < a.commands.size(); ++i) {
    CHECK(c.commands[i].command == a.commands[i].command);
    CHECK(std::abs(c.commands[i].target_deg - a.commands[i].target_deg) < 1e-6);
  }
  for (int j = 0; j < kCommandCount; ++j) {
    CHECK(std::abs(c.final_measured[j] - a.final_measured[j]) <= desc.bus.encoder_quantum_deg());
  }

  // A lossy bus delivers the same commands.
  const auto d = run(frames, mapping, 0.05);
  CHECK(d.bus_faults == 0);
  REQUIRE(d.commands.size() == a.commands.size());
}

TEST_CASE("warm start continuity on the bundled traces") {
  const auto desc = default_hand();
  const auto mapping = default_mapping(desc);
  for (const char* name : {"sample.jsonl", "opposition.jsonl"}) {
    CAPTURE(name);
    const auto frames = load(name);
    HandState state;
    std::optional<RetargetFrame> prev;
    double worst = 0.0;
    for (const auto& f : frames) {
      const auto r = retarget_frame(f, mapping, desc, state);
      REQUIRE_FALSE(r.skipped);
      double move = 0.0;
      if (prev) {
        for (int d = 0; d < kDigitCount; ++d) {
          if (!f.fingers[d] || !prev->fingers[d]) continue;
          move = std::max(move, mapping.scale * (f.fingers[d]->tip - prev->fingers[d]->tip).norm());
          move = std::max(move, mapping.scale * (f.fingers[d]->dip - prev->fingers[d]->dip).norm());
        }
        if (move < 1.0) {
          for (int c = 0; c < kCommandCount; ++c) worst = std::max(worst, std::abs(r.state[c] - state[c]));
        }
      }
      for (int c = 0; c < kCommandCount; ++c) {
        const auto lim = desc.command_limits(c);
        CHECK(lim.contains(r.state[c]));
      }
      state = r.state;
      prev = f;
    }
    CHECK(worst < 5.0);
  }
}
