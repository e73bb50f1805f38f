#include "hand_twin/bus.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace hand_twin;
using namespace hand_twin::bus;

namespace {

// Node address and channel slot that own a command.
struct Route {
  std::uint8_t address = 0;
  int slot = 0;
};

Route route(const Network& net, int command) {
  for (const auto& n : net.nodes()) {
    for (std::size_t k = 0; k < n.commands.size(); ++k) {
      if (n.commands[k] == command) return {n.address, static_cast<int>(k)};
    }
  }
  FAIL("no node owns command " << command);
  return {};
}

BusFrame set_target(const Network& net, int command, double deg) {
  const auto r = route(net, command);
  return make_set_target(r.address, r.slot, deg);
}

BusFrame set_drive(const Network& net, int command, bool on) {
  const auto r = route(net, command);
  return BusFrame{r.address, static_cast<std::uint8_t>(Op::SetDrive),
                  static_cast<std::uint8_t>(r.slot), on ? 1 : 0};
}

}  // namespace

TEST_CASE("frame encoding") {
  const BusFrame f{0x21, static_cast<std::uint8_t>(Op::SetTarget), 3, -45'000'000};
  const auto raw = f.encode();
  CHECK(raw[0] == 0x21);
  CHECK(raw[1] == 0x01);
  CHECK(raw[2] == 3);
  // Payload little-endian.
  const std::uint32_t u = static_cast<std::uint32_t>(-45'000'000);
  CHECK(raw[3] == (u & 0xFF));
  CHECK(raw[6] == (u >> 24));
  std::uint8_t x = 0;
  for (int i = 0; i < 7; ++i) x ^= raw[i];
  CHECK(raw[7] == x);
  CHECK(checksum_ok(raw));
  CHECK(decode(raw) == f);
  CHECK(to_micro(12.3456789) == 12'345'679);
  CHECK(from_micro(-1'500'000) == doctest::Approx(-1.5));
}

TEST_CASE("set target and read back") {
  Network net(default_hand());
  const auto a = route(net, kIndexMcp);
  const auto r = net.send(set_target(net, kIndexMcp, 45.0));
  REQUIRE(r.ok());
  CHECK_FALSE(r.clamped);
  CHECK(r.value == doctest::Approx(45.0));
  CHECK(r.raw[1] == (kAckBit | static_cast<std::uint8_t>(Op::SetTarget)));
  CHECK(net.targets()[kIndexMcp] == doctest::Approx(45.0));
  const auto e = net.send(make_read_encoder(a.address, a.slot));
  REQUIRE(e.ok());
  CHECK(e.value == 0.0);
}

TEST_CASE("faults leave the state unchanged") {
  Network net(default_hand());
  const auto a = route(net, kIndexMcp);
  auto raw = set_target(net, kIndexMcp, 45.0).encode();
  raw[4] ^= 0x10;
  const auto r = net.send(raw);
  CHECK(r.fault == Fault::BadChecksum);
  CHECK(r.raw[1] == kFaultCommand);
  CHECK(net.targets() == HandState{});

  CHECK(net.send(make_set_target(0x7E, a.slot, 10.0)).fault == Fault::UnknownAddress);
  CHECK(net.send(BusFrame{a.address, 0x33, static_cast<std::uint8_t>(a.slot), 0}).fault ==
        Fault::UnknownCommand);
  // A slot past the node's channels.
  CHECK(net.send(make_set_target(a.address, 40, 10.0)).fault == Fault::UnknownJoint);
  CHECK(net.targets() == HandState{});
}

TEST_CASE("out-of-range targets are clamped") {
  const auto h = default_hand();
  Network net(h);
  const auto r = net.send(set_target(net, kIndexMcp, 200.0));
  REQUIRE(r.ok());
  CHECK(r.clamped);
  CHECK(r.raw[1] == (kAckBit | kClampBit | static_cast<std::uint8_t>(Op::SetTarget)));
  CHECK(net.targets()[kIndexMcp] == doctest::Approx(h.command_limits(kIndexMcp).max_deg));
  CHECK(net.channel(kIndexMcp).clamped);
}

TEST_CASE("every node is addressable and addresses are unique") {
  Network net(default_hand());
  std::set<std::uint8_t> seen;
  for (const auto& n : net.nodes()) {
    CHECK(n.address < 0x80);
    CHECK(seen.insert(n.address).second);
  }
  for (int c = 0; c < kCommandCount; ++c) CHECK(net.address_of(c).has_value());
}

TEST_CASE("zero tick is a no-op") {
  Network net(default_hand());
  net.send(set_target(net, kIndexMcp, 45.0));
  net.tick(0.001);
  const auto before = net.snapshot();
  const double t = net.time();
  net.tick(0.0);
  CHECK(net.snapshot() == before);
  CHECK(net.time() == t);
  CHECK_THROWS_AS(net.tick(-0.1), DomainError);
}

TEST_CASE("finger step follows the rate-limited reference") {
  const auto h = default_hand();
  Network net(h);
  net.send(set_target(net, kIndexMcp, 91.5));
  const double dt = 1.0 / h.bus.tick_hz;
  const double q = net.quantum_deg();
  double worst = 0.0;
  double prev = 0.0;
  for (int i = 1; i <= 1200; ++i) {
    net.tick(dt);
    const double ref = oracle::rate_limited(0.0, 91.5, h.bus.finger_speed_deg_s,
                                            h.bus.gain_per_s, i * dt);
    const auto& ch = net.channel(kIndexMcp);
    worst = std::max(worst, std::abs(ch.measured_deg - ref));
    CHECK(ch.measured_deg >= prev);
    CHECK(ch.true_deg <= 91.5 + q);
    CHECK(std::abs(ch.measured_deg - ch.true_deg) <= q);
    prev = ch.measured_deg;
  }
  CHECK(worst < q);
  CHECK(std::abs(net.channel(kIndexMcp).measured_deg - 91.5) <= 0.5);

  // The library's own reference agrees with the independent closed form.
  for (double t : {0.0, 0.3, 0.99, 1.0, 1.05, 1.5}) {
    CHECK(rate_limited_reference(0.0, 91.5, 91.5, 50.0, t) ==
          doctest::Approx(oracle::rate_limited(0.0, 91.5, 91.5, 50.0, t)));
  }
}

TEST_CASE("speed never exceeds the cap") {
  const auto h = default_hand();
  Network net(h);
  for (int c = 0; c < kCommandCount; ++c) {
    const auto lim = h.command_limits(c);
    net.send(set_target(net, c, lim.max_deg));
  }
  const double dt = 1.0 / h.bus.tick_hz;
  for (int i = 0; i < 500; ++i) {
    std::array<double, kCommandCount> before{};
    for (int c = 0; c < kCommandCount; ++c) before[c] = net.channel(c).true_deg;
    net.tick(dt);
    for (int c = 0; c < kCommandCount; ++c) {
      CHECK(std::abs(net.channel(c).true_deg - before[c]) <= net.max_speed(c) * dt + 1e-12);
    }
  }
}

TEST_CASE("snapshot after reset and after settling") {
  const auto h = default_hand();
  Network net(h);
  HandState goal;
  goal[kIndexMcp] = 30.0;
  goal[kThumbCmc] = 20.0;
  goal[kAbductionServo] = -10.0;
  goal[kWristFe] = 25.0;
  goal[kWristRud] = -8.0;
  for (int c = 0; c < kCommandCount; ++c) net.send(set_target(net, c, goal[c]));
  net.run_for(3.0);
  const auto s = net.snapshot();
  for (int c = 0; c < kCommandCount; ++c) CHECK(std::abs(s[c] - goal[c]) <= net.quantum_deg());
  net.reset();
  CHECK(net.snapshot() == HandState{});
  CHECK(net.targets() == HandState{});
  CHECK(net.time() == 0.0);
}

TEST_CASE("determinism") {
  auto run = [] {
    Network net(default_hand());
    std::vector<TelemetryRecord> all;
    net.send(set_target(net, kMiddlePip, 50.0));
    for (int i = 0; i < 300; ++i) {
      if (i == 100) net.send(set_target(net, kWristRud, 12.0));
      auto batch = net.tick(0.001);
      all.insert(all.end(), batch.begin(), batch.end());
    }
    std::ostringstream os;
    write_telemetry_jsonl(os, all);
    return os.str();
  };
  CHECK(run() == run());
}

TEST_CASE("self-locking channels hold under external torque") {
  Network net(default_hand());
  net.send(set_target(net, kRingPip, 40.0));
  net.run_for(1.0);
  const auto off = net.send(set_drive(net, kRingPip, false));
  REQUIRE(off.ok());
  const double held = net.channel(kRingPip).measured_deg;
  for (int i = 0; i < 200; ++i) {
    net.apply_external_torque(kRingPip, (i % 2 ? 1 : -1) * 500.0);
    net.tick(0.001);
    CHECK(net.channel(kRingPip).measured_deg == held);
  }
}

TEST_CASE("lossy bus still applies every command") {
  const auto h = default_hand();
  Network net(h);
  Master master(net, 0.05, 99, h.bus.retry_limit);
  int acked = 0;
  for (int i = 0; i < 400; ++i) {
    const int c = i % kCommandCount;
    const auto lim = h.command_limits(c);
    const double deg = lim.min_deg + (lim.max_deg - lim.min_deg) * ((i * 37) % 100) / 100.0;
    const auto r = master.set_target(c, deg);
    REQUIRE(r.has_value());
    acked += r->ok();
    CHECK(net.targets()[c] == doctest::Approx(deg).epsilon(1e-6));
  }
  CHECK(acked == 400);
  CHECK(master.dropped() > 0);
  CHECK(master.retransmits() > 0);
}

TEST_CASE("telemetry log round trip") {
  Network net(default_hand());
  net.send(set_target(net, kIndexMcp, 200.0));
  const auto recs = net.run_for(0.05);
  REQUIRE(!recs.empty());
  CHECK((recs.front().flags & kFlagClamped) != 0);
  std::stringstream ss;
  write_telemetry_jsonl(ss, recs);
  const auto back = read_telemetry_jsonl(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].joint == recs[i].joint);
    CHECK(back[i].flags == recs[i].flags);
    CHECK(back[i].t == doctest::Approx(recs[i].t));
    CHECK(back[i].measured_deg == doctest::Approx(recs[i].measured_deg));
  }
  std::stringstream bad("{\"t\":0}\nnot json\n");
  CHECK_THROWS_AS(read_telemetry_jsonl(bad), DomainError);
}
