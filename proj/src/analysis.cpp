// Opposition solving and the range-of-motion report.

#include "hand_twin/detail/chain.hpp"
#include "hand_twin/detail/random.hpp"
#include "hand_twin/kinematics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>

namespace hand_twin {

HandState opposition_finger_pose(const HandDescription& desc, DigitId finger) {
  HandState s = clamp_state(desc, HandState{});
  for (const auto& j : desc.digit(finger).joints) {
    if (j.type == JointType::CoupledAbduction) continue;
    s[j.command] = j.limits.min_deg + 0.6 * j.limits.total();
  }
  return s;
}

OppositionResult opposition_check(const HandDescription& desc, DigitId finger,
                                  const OppositionOptions& options) {
  if (finger == DigitId::D1) throw DomainError("opposition target must be one of D2..D5");
  if (!(options.tol_mm > 0.0)) throw DomainError("opposition tolerance must be > 0");

  std::array<bool, kCommandCount> active{};
  std::vector<int> free;
  auto enable = [&](DigitId d) {
    auto cmds = detail::digit_commands(desc, d);
    cmds.resize(cmds.size() - 2);
    for (int c : cmds) {
      if (!active[static_cast<std::size_t>(c)]) free.push_back(c);
      active[static_cast<std::size_t>(c)] = true;
    }
  };
  enable(DigitId::D1);
  if (!options.thumb_only) enable(finger);

  const HandState finger_pose =
      options.finger_pose ? *options.finger_pose : opposition_finger_pose(desc, finger);
  check_state(desc, finger_pose);

  IkOptions ik;
  ik.tol_mm = kOppositionFloorMm;
  ik.max_iter = options.max_iter;
  ik.active = active;
  const IkContact contact{DigitId::D1, finger, 1.0};

  OppositionResult best;
  best.finger = finger;
  best.distance_mm = std::numeric_limits<double>::infinity();
  detail::Rng rng(options.seed);
  for (int attempt = 0; attempt <= options.restarts; ++attempt) {
    HandState seed = finger_pose;
    for (int c : free) {
      const auto lim = desc.command_limits(c);
      if (attempt == 0) {
        // Thumb starts half-way through its range; the finger keeps its pose.
        if (c <= kThumbIp) {
          seed[c] = lim.min_deg + 0.5 * lim.total();
        }
      } else {
        seed[c] = rng.uniform(lim.min_deg, lim.max_deg);
      }
    }
    const auto r = solve_ik(desc, {}, seed, ik, std::span<const IkContact>(&contact, 1));
    best.attempts = attempt + 1;
    if (r.residual_mm < best.distance_mm) {
      best.distance_mm = r.residual_mm;
      best.state = r.state;
    }
    if (best.distance_mm <= options.tol_mm) break;
  }
  // Below the solver floor a distance is not resolved, so it cannot count.
  best.success = options.tol_mm >= kOppositionFloorMm && best.distance_mm <= options.tol_mm;
  return best;
}

// Range of motion -------------------------------------------------------------------------

namespace {

// Human reference totals by joint name.
const std::map<std::string, double, std::less<>>& human_reference() {
  static const std::map<std::string, double, std::less<>> ref = {
      {"thumb_cmc", 55.00},       {"thumb_mcp", 57.27},       {"thumb_ip", 65.00},
      {"index_mcp", 49.20},       {"index_pip", 86.60},       {"index_dip", 57.95},
      {"index_abduction", 19.19}, {"middle_mcp", 66.33},      {"middle_pip", 85.08},
      {"middle_dip", 55.62},      {"ring_mcp", 65.30},        {"ring_pip", 93.67},
      {"ring_dip", 58.43},        {"ring_abduction", 17.29},  {"pinky_mcp", 52.76},
      {"pinky_pip", 91.81},       {"pinky_dip", 56.71},       {"pinky_abduction", 45.01},
      {"wrist_fe", 120.00},       {"wrist_rud", 50.00},
  };
  return ref;
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

double human_for(const std::string& name) {
  const auto& ref = human_reference();
  const auto it = ref.find(name);
  return it == ref.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

std::string joint_label(const Digit& d, const Joint& j) {
  if (j.type == JointType::CoupledAbduction) return "Ab/adduction";
  std::string label = j.name;
  if (label.rfind(d.name + "_", 0) == 0) label = label.substr(d.name.size() + 1);
  for (auto& ch : label) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return label;
}

}  // namespace

RomReport rom_report(const HandDescription& desc) {
  RomReport rep;
  for (const auto& d : desc.digits) {
    // Flexion joints first, abduction last.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& j : d.joints) {
        const bool abd = j.type == JointType::CoupledAbduction;
        if (abd != (pass == 1)) continue;
        rep.rows.push_back({capitalized(d.name), joint_label(d, j), j.limits.total(),
                            human_for(j.name)});
      }
    }
  }
  rep.rows.push_back({"Wrist", "FE", desc.wrist.fe_limits.total(), human_for("wrist_fe")});
  rep.rows.push_back({"Wrist", "RUD", desc.wrist.rud_limits.total(), human_for("wrist_rud")});

  double hand_all = 0.0, human_all = 0.0, hand_fingers = 0.0, human_fingers = 0.0;
  for (const auto& r : rep.rows) {
    if (std::isnan(r.human_deg)) continue;
    hand_all += r.hand_deg;
    human_all += r.human_deg;
    if (r.part != "Wrist") {
      hand_fingers += r.hand_deg;
      human_fingers += r.human_deg;
    }
  }
  rep.advantage_with_wrist = human_all > 0.0 ? hand_all / human_all - 1.0 : 0.0;
  rep.advantage_fingers_only = human_fingers > 0.0 ? hand_fingers / human_fingers - 1.0 : 0.0;
  return rep;
}

void write_rom_csv(std::ostream& os, const RomReport& report) {
  os << "part,joint,hand_deg,human_deg,delta_deg,relative\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : report.rows) {
    os << r.part << ',' << r.joint << ',' << r.hand_deg << ',' << r.human_deg << ','
       << r.delta_deg() << ',' << std::setprecision(4) << r.relative() << std::setprecision(2)
       << '\n';
  }
  os << std::setprecision(4) << "aggregate,sum_ratio,with_wrist=" << report.advantage_with_wrist
     << ",fingers_only=" << report.advantage_fingers_only << ",,\n";
  os << std::defaultfloat;
}

void write_rom_table(std::ostream& os, const RomReport& report) {
  os << std::left << std::setw(8) << "Part" << std::setw(14) << "Joint" << std::right
     << std::setw(10) << "Hand" << std::setw(10) << "Human" << std::setw(10) << "Delta" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& r : report.rows) {
    os << std::left << std::setw(8) << r.part << std::setw(14) << r.joint << std::right
       << std::setw(10) << r.hand_deg << std::setw(10) << r.human_deg << std::setw(10)
       << r.delta_deg() << '\n';
  }
  os << std::setprecision(1) << "RoM advantage: " << 100.0 * report.advantage_with_wrist
     << "% (all joints), " << 100.0 * report.advantage_fingers_only << "% (digits only)\n";
  os << std::defaultfloat << std::left;
}

}  // namespace hand_twin
