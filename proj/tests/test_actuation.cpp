#include "hand_twin/actuation.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace hand_twin;

namespace {

RockerGeometry plain(double a, double b, double base, double stroke, double theta0 = 0.0) {
  return {a, b, theta0, base, stroke, 1};
}

std::vector<const Joint*> leadscrew_joints(const HandDescription& h) {
  std::vector<const Joint*> out;
  for (const auto& d : h.digits) {
    for (const auto& j : d.joints) {
      if (j.type == JointType::LeadscrewFlexion) out.push_back(&j);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("lead angle") {
  CHECK(std::abs(lead_angle(0.35, 2.50) - 2.55) < 0.01);
  CHECK(std::abs(lead_angle(2.5, 9.49) - 4.80) < 0.01);
  CHECK(lead_angle(0.0, 3.0) == 0.0);
  CHECK_THROWS_AS(lead_angle(0.35, 0.0), DomainError);
  // Series oracle.
  for (double l : {0.1, 0.35, 1.0, 2.5}) {
    for (double d : {1.0, 2.5, 9.49}) {
      const double ref = oracle::deg(oracle::atan_series(l / (std::numbers::pi_v<long double> * d)));
      CHECK(lead_angle(l, d) == doctest::Approx(ref).epsilon(1e-13));
    }
  }
}

TEST_CASE("friction angle") {
  CHECK(std::abs(friction_angle(0.46) - 24.70) < 0.01);
  CHECK(friction_angle(0.0) == 0.0);
  const double ref = oracle::deg(oracle::atan_series(0.42L));
  CHECK(friction_angle(0.42) == doctest::Approx(ref).epsilon(1e-13));
  CHECK(std::abs(friction_angle(0.42) - 22.78) < 0.01);
  CHECK_THROWS_AS(friction_angle(-0.1), DomainError);
}

TEST_CASE("self-locking verdicts") {
  const auto h = default_hand();
  const auto screw = self_lock_margin(h.transmission.finger_screw);
  CHECK(screw.locking);
  const auto worm = self_lock_margin(h.transmission.cmc_worm);
  CHECK(worm.locking);
  CHECK(worm.margin_deg == doctest::Approx(19.90).epsilon(0.001));
  const auto loose = self_lock_margin(ScrewParams{2.5, 2.5, 0.10, 10.0});
  CHECK_FALSE(loose.locking);
  CHECK(loose.lead_angle_deg == doctest::Approx(17.66).epsilon(1e-3));
  CHECK(loose.friction_angle_deg == doctest::Approx(5.71).epsilon(1e-3));
}

TEST_CASE("screw forces") {
  const ScrewParams s{0.35, 2.5, 0.42, 16.0};
  // Frictionless screw is an ideal machine: W = 2 pi T / l.
  const ScrewParams ideal{0.35, 2.5, 0.0, 16.0};
  CHECK(axial_force_from_torque(ideal, 10.0) == doctest::Approx(2.0 * kPi * 10.0 / 0.35));
  CHECK(axial_force_from_torque(s, 0.0) == 0.0);
  CHECK(axial_force_from_torque(s, 10.0) < axial_force_from_torque(ideal, 10.0));
  CHECK(holding_torque(s, 10.0) > 0.0);
  CHECK(holding_torque(ScrewParams{2.5, 2.5, 0.1, 1.0}, 10.0) < 0.0);
}

TEST_CASE("rocker interior angle") {
  const auto g = plain(10.0, 10.0, 0.0, 20.0);
  CHECK(rad2deg(rocker_interior_angle(g, std::sqrt(200.0))) == doctest::Approx(90.0));
  CHECK(rad2deg(rocker_interior_angle(g, 20.0)) == doctest::Approx(180.0));
  CHECK_THROWS_AS(rocker_interior_angle(g, 20.5), TriangleError);
  const auto short_stroke = plain(10.0, 10.0, 0.0, 5.0);
  CHECK_THROWS_AS(rocker_interior_angle(short_stroke, 6.0), StrokeError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> side(5.0, 15.0);
  for (int i = 0; i < 200; ++i) {
    const double a = side(rng);
    const double b = side(rng);
    const double lo = std::abs(a - b) + 0.1;
    const double hi = a + b - 0.1;
    const auto geom = plain(a, b, lo, hi - lo);
    const double s = std::uniform_real_distribution<double>(0.0, hi - lo)(rng);
    CHECK(rocker_interior_angle(geom, s) ==
          doctest::Approx(oracle::rocker_psi(a, b, lo + s)).epsilon(1e-10));
  }
}

TEST_CASE("moment arm") {
  const auto g = plain(10.0, 10.0, 0.0, 20.0);
  const JointLimits lim{0.0, 179.9};
  CHECK(moment_arm(g, 90.0, lim) == doctest::Approx(100.0 / std::sqrt(200.0)).epsilon(1e-12));
  CHECK(moment_arm(g, 179.9, lim) < 0.01);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> side(5.0, 15.0);
  for (int i = 0; i < 200; ++i) {
    const double a = side(rng);
    const double b = side(rng);
    const double lo = std::abs(a - b) + 0.5;
    const double hi = a + b - 0.5;
    const auto geom = plain(a, b, lo, hi - lo);
    const double psi0 = rocker_interior_angle(geom, 0.0);
    const double psi1 = rocker_interior_angle(geom, hi - lo);
    const JointLimits range{0.0, rad2deg(psi1 - psi0)};
    auto shifted = geom;
    shifted.theta0_rad = psi0;
    const double angle = std::uniform_real_distribution<double>(0.0, range.max_deg)(rng);
    CHECK(moment_arm(shifted, angle, range) ==
          doctest::Approx(oracle::origin_to_line(a, b, psi0 + deg2rad(angle))).epsilon(1e-9));
  }
  CHECK(nut_center_distance(g) == 10.0);
}

TEST_CASE("calibrate_rocker recovers a known geometry") {
  auto g = plain(8.0, 11.0, 6.0, 8.0, 0.3);
  const double lo = nut_travel_to_joint_angle(g, 0.0);
  const double hi = nut_travel_to_joint_angle(g, 8.0);
  const auto cal = calibrate_rocker(8.0, lo, hi, 8.0, 6.0);
  CHECK(cal.b_mm == doctest::Approx(11.0).epsilon(1e-9));
  CHECK(cal.theta0_rad == doctest::Approx(0.3).epsilon(1e-9));
  CHECK_THROWS_AS(calibrate_rocker(8.0, 10.0, 10.0, 8.0, 6.0), DomainError);
}

TEST_CASE("index MCP over a 20 mm stroke") {
  const auto h = default_hand();
  const Joint& mcp = *h.find_joint("index_mcp");
  const auto cal = calibrate_rocker(20.0, 0.0, 103.13, mcp.rocker.a_mm, mcp.rocker.base_length_mm);
  CHECK(nut_travel_to_joint_angle(cal, 20.0) == doctest::Approx(103.13).epsilon(1e-10));
  CHECK(mcp.rocker.stroke_mm == doctest::Approx(20.0));
}

TEST_CASE("centered rocker") {
  const auto g = centered_rocker(16.0, 0.0, 68.09);
  CHECK(g.a_mm == doctest::Approx(g.b_mm));
  CHECK(nut_travel_to_joint_angle(g, 0.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(nut_travel_to_joint_angle(g, 16.0) == doctest::Approx(68.09).epsilon(1e-12));
  const double mid = rad2deg(rocker_interior_angle(g, 0.0)) + 68.09 / 2.0;
  CHECK(mid == doctest::Approx(90.0));
}

TEST_CASE("all 14 calibrated joints") {
  const auto h = default_hand();
  const auto joints = leadscrew_joints(h);
  REQUIRE(joints.size() == 14);
  std::mt19937_64 rng(21);
  for (const Joint* j : joints) {
    CAPTURE(j->name);
    const auto& g = j->rocker;
    CHECK(std::abs(nut_travel_to_joint_angle(g, 0.0) - j->limits.min_deg) < 1e-6);
    CHECK(std::abs(nut_travel_to_joint_angle(g, g.stroke_mm) - j->limits.max_deg) < 1e-6);
    double prev = -1e9;
    for (int i = 0; i <= 1000; ++i) {
      const double th = nut_travel_to_joint_angle(g, g.stroke_mm * i / 1000.0);
      CHECK(th > prev);
      prev = th;
    }
    std::uniform_real_distribution<double> pick(j->limits.min_deg, j->limits.max_deg);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double th = pick(rng);
      const double s = joint_angle_to_nut_travel(g, th, j->limits);
      worst = std::max(worst, std::abs(nut_travel_to_joint_angle(g, s) - th));
      const double back = joint_angle_to_nut_travel(g, nut_travel_to_joint_angle(g, s), j->limits);
      worst = std::max(worst, std::abs(back - s));
    }
    CHECK(worst < 1e-9);
    CHECK(joint_angle_to_nut_travel(g, j->limits.min_deg, j->limits) == doctest::Approx(0.0));
    CHECK_THROWS_AS(joint_angle_to_nut_travel(g, j->limits.max_deg + 1.0, j->limits), LimitError);
  }
}

TEST_CASE("abduction train") {
  const auto h = default_hand();
  const auto& t = h.transmission.abduction;
  const auto zero = abduction_map(0.0, t);
  for (double d : zero.deg) CHECK(d == 0.0);
  const auto lo = abduction_map(t.servo_limits.min_deg, t);
  const auto hi = abduction_map(t.servo_limits.max_deg, t);
  auto total = [&](DigitId d) {
    return std::abs(hi.deg[static_cast<std::size_t>(d)] - lo.deg[static_cast<std::size_t>(d)]);
  };
  CHECK(total(DigitId::D2) == doctest::Approx(26.73));
  CHECK(total(DigitId::D4) == doctest::Approx(26.73));
  CHECK(total(DigitId::D5) == doctest::Approx(39.37));
  CHECK(total(DigitId::D3) == 0.0);
  for (double s = t.servo_limits.min_deg; s <= t.servo_limits.max_deg; s += 7.5) {
    const auto a = abduction_map(s, t);
    const double d2 = a.deg[static_cast<std::size_t>(DigitId::D2)];
    const double d4 = a.deg[static_cast<std::size_t>(DigitId::D4)];
    CHECK(std::abs(d2) == doctest::Approx(std::abs(d4)));
    if (s != 0.0) CHECK((d2 > 0.0) != (d4 > 0.0));
  }
  CHECK_THROWS_AS(abduction_map(t.servo_limits.max_deg + 1.0, t), LimitError);
}

TEST_CASE("fingertip statics") {
  const auto h = default_hand();
  const auto mid = mid_flexion_state(h);
  for (const auto& d : h.digits) {
    CAPTURE(digit_label(d.id));
    std::size_t n = 0;
    for (const auto& j : d.joints) n += j.type == JointType::LeadscrewFlexion;
    const double contact = h.transmission.contact_fraction * d.link_length(2);
    const auto zero = static_fingertip_force(h, d.id, mid, std::vector<double>(n, 0.0), contact);
    CHECK(zero.force_n == 0.0);
    const auto f = static_fingertip_force(
        h, d.id, mid, std::vector<double>(n, h.transmission.nominal_motor_torque_nmm), contact);
    CHECK(f.force_n >= 10.0);
    CHECK(f.force_n < 40.0);
    // Linear in torque.
    const auto f2 = static_fingertip_force(
        h, d.id, mid, std::vector<double>(n, 2.0 * h.transmission.nominal_motor_torque_nmm),
        contact);
    CHECK(f2.force_n == doctest::Approx(2.0 * f.force_n));
  }
  CHECK(calibrate_nominal_torque(h, 10.0) == doctest::Approx(h.transmission.nominal_motor_torque_nmm));
  CHECK_THROWS_AS(static_fingertip_force(h, DigitId::D2, mid, {1.0}, 10.0), DomainError);
}

TEST_CASE("no back-drive under a 44.5 N load") {
  const auto h = default_hand();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    HandState s;
    for (int c = 0; c < kCommandCount; ++c) {
      const auto lim = h.command_limits(c);
      s[c] = std::uniform_real_distribution<double>(lim.min_deg, lim.max_deg)(rng);
    }
    for (const auto& d : h.digits) {
      for (const auto& r : back_drive_check(h, d.id, s, 44.5, 0.8 * d.link_length(2))) {
        CAPTURE(r.joint);
        CHECK(r.self_locking);
        CHECK(r.nut_motion_mm == 0.0);
        CHECK(r.holding_torque_nmm >= 0.0);
      }
    }
  }
  // A screw that does not lock runs back.
  auto loose = h;
  loose.transmission.finger_screw.mu = 0.01;
  const auto reports = back_drive_check(loose, DigitId::D2, mid_flexion_state(loose), 44.5, 20.0);
  CHECK_FALSE(reports.front().self_locking);
  CHECK(reports.front().nut_motion_mm > 0.0);
}
