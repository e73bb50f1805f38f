#include "hand_twin/cli.hpp"

#include "hand_twin/actuation.hpp"
#include "hand_twin/bus.hpp"
#include "hand_twin/kinematics.hpp"
#include "hand_twin/service.hpp"
#include "hand_twin/teleop.hpp"
#include "hand_twin/wrist.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace hand_twin::cli {

namespace {

std::vector<DigitId> parse_digits(const std::string& spec, bool fingers_only) {
  std::vector<DigitId> out;
  if (spec == "all") {
    for (int i = fingers_only ? 1 : 0; i < kDigitCount; ++i) out.push_back(static_cast<DigitId>(i));
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto id = parse_digit(item);
    if (!id) throw CLI::ValidationError("digit", "unknown digit " + item);
    if (fingers_only && *id == DigitId::D1) {
      throw CLI::ValidationError("finger", "the thumb is the opposing digit");
    }
    out.push_back(*id);
  }
  return out;
}

Vec3 parse_vec(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> v;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw CLI::ValidationError("point", "expected x,y,z, got " + text);
    }
  }
  if (v.size() != 3) throw CLI::ValidationError("point", "expected x,y,z, got " + text);
  return {v[0], v[1], v[2]};
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw HandError("cannot write " + path);
  return os;
}

void print_lock(std::ostream& out, const std::string& name, const SelfLockReport& r) {
  out << name << '\n'
      << std::fixed << std::setprecision(2) << "  lead angle α = " << r.lead_angle_deg << "°\n"
      << "  friction angle φ = " << r.friction_angle_deg << "°\n"
      << "  margin = " << r.margin_deg << "°\n"
      << "  verdict " << (r.locking ? "LOCKING" : "NOT LOCKING") << '\n';
}

// Subcommand state ------------------------------------------------------------------

struct Args {
  std::string config;

  std::optional<double> lead, dia, mu;

  std::string format = "table";

  std::string digits = "all";
  std::size_t samples = 50000;
  std::uint64_t seed = 1;
  std::string out;

  double step = 0.5;

  std::string what = "all";

  std::string finger = "D2";
  std::string tip;
  std::string dip;

  double tol = 5.0;
  bool thumb_only = false;

  std::string joint = "index_mcp";
  double target = 45.0;
  double duration = 2.0;
  double drop = 0.0;
  std::string telemetry;

  std::string trace;
  std::string fixture;
  double rate = 60.0;
  std::string log;

  std::string address = "127.0.0.1";
  int port = 8765;
  double publish_hz = 30.0;
  double seconds = 0.0;
};

int run_selflock(const Args& a, const HandDescription& desc, std::ostream& out) {
  if (a.lead || a.dia || a.mu) {
    ScrewParams s = desc.transmission.finger_screw;
    if (a.lead) s.lead_mm = *a.lead;
    if (a.dia) s.mean_diameter_mm = *a.dia;
    if (a.mu) s.mu = *a.mu;
    print_lock(out, "screw", self_lock_margin(s));
    return 0;
  }
  print_lock(out, "finger lead screw", self_lock_margin(desc.transmission.finger_screw));
  print_lock(out, "thumb CMC worm", self_lock_margin(desc.transmission.cmc_worm));
  return 0;
}

int run_rom(const Args& a, const HandDescription& desc, std::ostream& out) {
  const auto report = rom_report(desc);
  if (a.format == "csv") {
    write_rom_csv(out, report);
  } else {
    write_rom_table(out, report);
  }
  return 0;
}

int run_workspace(const Args& a, const HandDescription& desc, std::ostream& out) {
  std::vector<WorkspaceCloud> clouds;
  for (DigitId d : parse_digits(a.digits, false)) {
    clouds.push_back(sample_workspace(desc, d, a.samples, a.seed));
  }
  if (a.format == "bin") {
    if (a.out.empty()) throw CLI::ValidationError("--out", "binary output needs --out");
    auto os = open_out(a.out, true);
    write_workspace_binary(os, clouds);
  } else if (a.out.empty()) {
    write_workspace_csv(out, clouds);
  } else {
    auto os = open_out(a.out);
    write_workspace_csv(os, clouds);
  }
  if (!a.out.empty()) {
    for (const auto& c : clouds) {
      out << digit_label(c.digit) << ": " << c.points.size() << " points\n";
    }
  }
  return 0;
}

int run_envelope(const Args& a, const HandDescription& desc, std::ostream& out) {
  const auto env = wrist_envelope(desc.wrist, a.step);
  if (!a.out.empty()) {
    auto os = open_out(a.out);
    write_envelope_csv(os, env);
  }
  out << std::fixed << std::setprecision(1) << "flexion   " << env.max_flexion_deg << "°  ("
      << env.flexion_binding << ")\n"
      << "extension " << env.max_extension_deg << "°  (" << env.extension_binding << ")\n"
      << "radial    " << env.max_radial_deg << "°  (" << env.radial_binding << ")\n"
      << "ulnar     " << env.max_ulnar_deg << "°  (" << env.ulnar_binding << ")\n";
  return 0;
}

int run_calibrate(const Args& a, HandDescription desc, std::ostream& out) {
  const bool all = a.what == "all";
  if (all || a.what == "rocker") {
    for (auto& d : desc.digits) {
      for (auto& j : d.joints) {
        if (j.type != JointType::LeadscrewFlexion) continue;
        const auto& r = j.rocker;
        auto cal = calibrate_rocker(r.stroke_mm, j.limits.min_deg, j.limits.max_deg, r.a_mm,
                                    r.base_length_mm);
        cal.sign = r.sign;
        j.rocker = cal;
        out << j.name << ": b = " << cal.b_mm << " mm, theta0 = " << cal.theta0_rad << " rad\n";
      }
    }
  }
  if (all || a.what == "wheels") {
    auto& train = desc.transmission.abduction;
    for (auto& st : train.stages) {
      for (const auto& j : desc.digit(st.digit).joints) {
        if (j.type != JointType::CoupledAbduction) continue;
        st.wheel_radius_mm = abduction_wheel_radius(train, st.worm_pitch_mm, j.limits.total());
        out << j.name << ": wheel radius = " << st.wheel_radius_mm << " mm\n";
      }
    }
  }
  if (all || a.what == "wrist") {
    desc.wrist = calibrate_wrist(desc.wrist, desc.wrist.fe_limits.max_deg,
                                 -desc.wrist.fe_limits.min_deg);
    out << std::setprecision(17) << "wrist: lower radius = " << desc.wrist.lower_radius_mm
        << " mm, min length = " << desc.wrist.min_length_mm << " mm\n";
  }
  if (!all && a.what != "rocker" && a.what != "wheels" && a.what != "wrist") {
    throw CLI::ValidationError("--what", "expected rocker, wheels, wrist or all");
  }
  validate(desc);
  const auto text = serialize_config(desc);
  if (a.out.empty()) {
    out << text << '\n';
  } else {
    auto os = open_out(a.out);
    os << text << '\n';
  }
  return 0;
}

int run_ik(const Args& a, const HandDescription& desc, std::ostream& out) {
  const auto finger = parse_digits(a.finger, false);
  if (finger.size() != 1) throw CLI::ValidationError("--finger", "exactly one digit");
  std::vector<IkTarget> targets;
  if (!a.dip.empty()) targets.push_back({finger[0], TargetPoint::Dip, parse_vec(a.dip), kDipWeight});
  targets.push_back({finger[0], TargetPoint::Tip, parse_vec(a.tip), kTipWeight});
  IkOptions opt;
  opt.active.fill(false);
  for (const auto& j : desc.digit(finger[0]).joints) {
    if (j.command >= 0) opt.active[static_cast<std::size_t>(j.command)] = true;
  }
  const auto r = solve_ik(desc, targets, clamp_state(desc, HandState{}), opt);
  nlohmann::json state = nlohmann::json::object();
  for (int c = 0; c < kCommandCount; ++c) {
    if (opt.active[static_cast<std::size_t>(c)]) {
      state[std::string(kCommandNames[static_cast<std::size_t>(c)])] = r.state[c];
    }
  }
  out << nlohmann::json{{"status", ik_status_name(r.status)},
                        {"residual_mm", r.residual_mm},
                        {"iterations", r.iterations},
                        {"restarts", r.restarts},
                        {"state", state}}
             .dump(2)
      << '\n';
  return r.success() ? 0 : 1;
}

int run_opposition(const Args& a, const HandDescription& desc, std::ostream& out) {
  OppositionOptions opt;
  opt.tol_mm = a.tol;
  opt.thumb_only = a.thumb_only;
  opt.seed = a.seed;
  bool ok = true;
  out << "finger  result   distance_mm  attempts\n";
  for (DigitId f : parse_digits(a.digits, true)) {
    const auto r = opposition_check(desc, f, opt);
    ok = ok && r.success;
    out << std::left << std::setw(8) << digit_label(f) << std::setw(9)
        << (r.success ? "contact" : "miss") << std::right << std::fixed << std::setprecision(4)
        << std::setw(11) << r.distance_mm << std::setw(10) << r.attempts << '\n';
  }
  return ok ? 0 : 1;
}

int run_simulate(const Args& a, const HandDescription& desc, std::ostream& out) {
  const int joint = command_index(a.joint);
  if (joint < 0) throw CLI::ValidationError("--joint", "unknown joint " + a.joint);
  bus::Network net(desc);
  bus::Master master(net, a.drop, a.seed, desc.bus.retry_limit);
  const auto reply = master.set_target(joint, a.target);
  if (!reply || !reply->ok()) throw HandError("SetTarget was not acknowledged");
  const auto records = net.run_for(a.duration);
  double settled = -1.0;
  for (const auto& r : records) {
    if (r.joint != joint) continue;
    const bool at = (r.flags & bus::kFlagAtTarget) != 0;
    if (at && settled < 0.0) settled = r.t;
    if (!at) settled = -1.0;
  }
  if (!a.telemetry.empty()) {
    auto os = open_out(a.telemetry);
    bus::write_telemetry_jsonl(os, records);
  }
  out << std::fixed << std::setprecision(4) << a.joint << " target " << reply->value << "°"
      << (reply->clamped ? " (clamped)" : "") << '\n'
      << "measured " << net.snapshot()[joint] << "° after " << a.duration << " s\n";
  if (settled >= 0.0) {
    out << "settled at t = " << settled << " s\n";
  } else {
    out << "not settled\n";
  }
  out << "frames sent " << master.sent() << ", dropped " << master.dropped() << ", retransmits "
      << master.retransmits() << '\n';
  return 0;
}

int run_replay(const Args& a, const HandDescription& desc, std::ostream& out) {
  const auto mapping = teleop::default_mapping(desc);
  std::vector<teleop::RetargetFrame> frames;
  if (!a.trace.empty()) {
    std::ifstream is(a.trace);
    if (!is) throw HandError("cannot read " + a.trace);
    frames = teleop::parse_trace(is);
  } else if (a.fixture == "opposition") {
    frames = teleop::opposition_trace(desc, mapping, a.rate).frames;
  } else if (a.fixture == "sample") {
    frames = teleop::sample_sweep_trace(desc, mapping, 10.0, a.rate);
  } else {
    throw CLI::ValidationError("replay", "give --trace PATH or --fixture opposition|sample");
  }
  bus::Network net(desc);
  bus::Master master(net, a.drop, a.seed, desc.bus.retry_limit);
  teleop::PipelineOptions opt;
  opt.rate_hz = a.rate;
  const auto rep = teleop::run_pipeline(frames, mapping, desc, master, opt);
  if (!a.log.empty()) {
    auto os = open_out(a.log);
    os << "t_s,joint,target_deg,acked,clamped\n";
    for (const auto& c : rep.commands) {
      os << c.t << ',' << kCommandNames[static_cast<std::size_t>(c.command)] << ','
         << c.target_deg << ',' << c.acked << ',' << c.clamped << '\n';
    }
  }
  double settled = 0.0;
  for (double e : rep.settled_tracking_error_deg) settled = std::max(settled, e);
  out << "frames " << rep.frames_processed << ", skipped " << rep.frames_skipped << ", stale "
      << rep.stale_events << '\n'
      << "commands " << rep.commands.size() << ", bus faults " << rep.bus_faults << '\n'
      << std::fixed << std::setprecision(4) << "settled tracking error " << settled
      << "° (quantum " << desc.bus.encoder_quantum_deg() << "°)\n";
  return 0;
}

int run_serve(const Args& a, const HandDescription& desc, std::ostream& out) {
  if (a.port < 0 || a.port > 65535) throw CLI::ValidationError("--port", "out of range");
  service::ServeOptions opt;
  opt.address = a.address;
  opt.port = static_cast<unsigned short>(a.port);
  opt.publish_hz = a.publish_hz;
  opt.run_seconds = a.seconds;
  opt.on_ready = [&](unsigned short port) {
    out << "listening on http://" << a.address << ':' << port << std::endl;
  };
  service::serve(desc, opt);
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parametric hand twin: analysis, simulation and teleoperation", "hand_twin"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Args a;
  app.add_option("--config", a.config, "Hand description (JSON); falls back to HAND_TWIN_CONFIG");

  auto* selflock = app.add_subcommand("selflock", "Screw and worm self-locking analysis");
  selflock->add_option("--lead", a.lead, "Lead (mm)");
  selflock->add_option("--dia", a.dia, "Mean diameter (mm)");
  selflock->add_option("--mu", a.mu, "Friction coefficient");

  auto* rom = app.add_subcommand("rom", "Range-of-motion comparison with the human reference");
  rom->add_option("--format", a.format)->check(CLI::IsMember({"table", "csv"}));

  auto* workspace = app.add_subcommand("workspace", "Sample and export fingertip clouds");
  workspace->add_option("--digits", a.digits, "all or a comma list such as D1,D2");
  workspace->add_option("--samples", a.samples)->check(CLI::PositiveNumber);
  workspace->add_option("--seed", a.seed);
  workspace->add_option("--format", a.format)->check(CLI::IsMember({"table", "csv", "bin"}));
  workspace->add_option("--out", a.out);

  auto* envelope = app.add_subcommand("envelope", "Wrist envelope scan");
  envelope->add_option("--step", a.step, "Grid step (deg)")->check(CLI::PositiveNumber);
  envelope->add_option("--out", a.out, "CSV path");

  auto* calibrate = app.add_subcommand("calibrate", "Recalibrate rockers, wheels and wrist");
  calibrate->add_option("--what", a.what)->check(CLI::IsMember({"all", "rocker", "wheels", "wrist"}));
  calibrate->add_option("--out", a.out, "Config output path");

  auto* ik = app.add_subcommand("ik", "One-shot inverse kinematics for a digit");
  ik->add_option("--finger", a.finger);
  ik->add_option("--tip", a.tip, "x,y,z (mm)")->required();
  ik->add_option("--dip", a.dip, "x,y,z (mm)");

  auto* opposition = app.add_subcommand("opposition", "Thumb opposition checks for D2..D5");
  opposition->add_option("--fingers", a.digits);
  opposition->add_option("--tol", a.tol, "Contact tolerance (mm)");
  opposition->add_flag("--thumb-only", a.thumb_only, "Hold the finger at the fixed pose");
  opposition->add_option("--seed", a.seed);

  auto* simulate = app.add_subcommand("simulate", "Step one joint on the simulated bus");
  simulate->add_option("--joint", a.joint);
  simulate->add_option("--target", a.target, "Target (deg)");
  simulate->add_option("--duration", a.duration, "Simulated seconds")->check(CLI::PositiveNumber);
  simulate->add_option("--drop", a.drop, "Frame drop probability")->check(CLI::Range(0.0, 0.99));
  simulate->add_option("--seed", a.seed);
  simulate->add_option("--telemetry", a.telemetry, "JSONL output path");

  auto* replay = app.add_subcommand("replay", "Replay a glove trace through the bus");
  replay->add_option("--trace", a.trace, "JSONL trace");
  replay->add_option("--fixture", a.fixture)->check(CLI::IsMember({"opposition", "sample"}));
  replay->add_option("--rate", a.rate, "Sample rate (Hz)")->check(CLI::PositiveNumber);
  replay->add_option("--drop", a.drop)->check(CLI::Range(0.0, 0.99));
  replay->add_option("--seed", a.seed);
  replay->add_option("--log", a.log, "Command log CSV");

  auto* serve = app.add_subcommand("serve", "Host the simulator over HTTP and websocket");
  serve->add_option("--address", a.address);
  serve->add_option("--port", a.port);
  serve->add_option("--publish-hz", a.publish_hz)->check(CLI::PositiveNumber);
  serve->add_option("--seconds", a.seconds, "Stop after this long; 0 runs until interrupted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 2;
  }

  try {
    const HandDescription desc = resolve_config(a.config);
    if (selflock->parsed()) return run_selflock(a, desc, out);
    if (rom->parsed()) return run_rom(a, desc, out);
    if (workspace->parsed()) return run_workspace(a, desc, out);
    if (envelope->parsed()) return run_envelope(a, desc, out);
    if (calibrate->parsed()) return run_calibrate(a, desc, out);
    if (ik->parsed()) return run_ik(a, desc, out);
    if (opposition->parsed()) return run_opposition(a, desc, out);
    if (simulate->parsed()) return run_simulate(a, desc, out);
    if (replay->parsed()) return run_replay(a, desc, out);
    if (serve->parsed()) return run_serve(a, desc, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace hand_twin::cli
