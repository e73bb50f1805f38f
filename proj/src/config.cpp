// JSON config loading and serialization. The document layout is described
// in data/hand.schema.json.

#include "hand_twin/actuation.hpp"
#include "hand_twin/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace hand_twin {

using nlohmann::json;

namespace {

struct Units {
  double length = 1.0;  // document unit -> mm
  double angle = 1.0;   // document unit -> deg
};

class Reader {
public:
  explicit Reader(Units u) : units_(u) {}

  const json& object(const json& parent, const std::string& key, const std::string& path) const {
    const json& v = field(parent, key, path);
    if (!v.is_object()) throw SchemaError(path + "/" + key, "expected an object");
    return v;
  }

  const json& array(const json& parent, const std::string& key, const std::string& path) const {
    const json& v = field(parent, key, path);
    if (!v.is_array()) throw SchemaError(path + "/" + key, "expected an array");
    return v;
  }

  double number(const json& parent, const std::string& key, const std::string& path) const {
    const json& v = field(parent, key, path);
    if (!v.is_number()) throw SchemaError(path + "/" + key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaError(path + "/" + key, "value is not finite");
    return d;
  }

  std::optional<double> optional_number(const json& parent, const std::string& key,
                                        const std::string& path) const {
    if (!parent.contains(key)) return std::nullopt;
    return number(parent, key, path);
  }

  double length(const json& parent, const std::string& key, const std::string& path) const {
    return number(parent, key, path) * units_.length;
  }
  double angle(const json& parent, const std::string& key, const std::string& path) const {
    return number(parent, key, path) * units_.angle;
  }

  int integer(const json& parent, const std::string& key, const std::string& path) const {
    const json& v = field(parent, key, path);
    if (!v.is_number_integer()) throw SchemaError(path + "/" + key, "expected an integer");
    return v.get<int>();
  }

  std::string string(const json& parent, const std::string& key, const std::string& path) const {
    const json& v = field(parent, key, path);
    if (!v.is_string()) throw SchemaError(path + "/" + key, "expected a string");
    return v.get<std::string>();
  }

  Vec3 vec3(const json& parent, const std::string& key, const std::string& path,
            double unit) const {
    const json& v = array(parent, key, path);
    if (v.size() != 3) throw SchemaError(path + "/" + key, "expected 3 numbers");
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
      if (!v[static_cast<std::size_t>(i)].is_number()) {
        throw SchemaError(path + "/" + key + "/" + std::to_string(i), "expected a number");
      }
      out[i] = v[static_cast<std::size_t>(i)].get<double>() * unit;
    }
    return out;
  }

  const Units& units() const { return units_; }

private:
  static const json& field(const json& parent, const std::string& key, const std::string& path) {
    if (!parent.is_object() || !parent.contains(key)) {
      throw SchemaError(path + "/" + key, "missing required field '" + key + "'");
    }
    return parent.at(key);
  }

  Units units_;
};

Units read_units(const json& doc) {
  Units u;
  if (!doc.contains("units")) throw SchemaError("/units", "missing required field 'units'");
  const json& j = doc.at("units");
  if (!j.is_object()) throw SchemaError("/units", "expected an object");
  const std::string length = j.value("length", "mm");
  const std::string angle = j.value("angle", "deg");
  if (length == "mm") u.length = 1.0;
  else if (length == "cm") u.length = 10.0;
  else if (length == "m") u.length = 1000.0;
  else throw SchemaError("/units/length", "unit out of range: '" + length + "' (mm, cm, m)");
  if (angle == "deg") u.angle = 1.0;
  else if (angle == "rad") u.angle = 180.0 / kPi;
  else throw SchemaError("/units/angle", "unit out of range: '" + angle + "' (deg, rad)");
  return u;
}

Joint read_joint(const Reader& r, const json& j, const std::string& path, DigitId digit) {
  Joint out;
  out.name = r.string(j, "name", path);
  const auto type_name = r.string(j, "type", path);
  const auto type = parse_joint_type(type_name);
  if (!type) throw SchemaError(path + "/type", "unknown joint type '" + type_name + "'");
  out.type = *type;
  out.limits = {r.angle(j, "min", path), r.angle(j, "max", path)};
  if (!(out.limits.max_deg > out.limits.min_deg)) {
    throw InvariantError(out.name + ": limit interval is empty (max <= min)");
  }
  out.axis = r.vec3(j, "axis", path, 1.0);
  if (j.contains("offset_rpy")) out.offset_rpy_deg = r.vec3(j, "offset_rpy", path, r.units().angle);
  out.link = j.contains("link") ? r.integer(j, "link", path) : -1;

  if (out.type == JointType::CoupledAbduction) {
    out.command = kAbductionServo;
    if (digit == DigitId::D3) throw InvariantError("D3 carries no abduction coupling");
  } else {
    out.command = command_index(out.name);
    if (out.command < 0 || out.command >= kAbductionServo) {
      throw SchemaError(path + "/name", "'" + out.name + "' is not a commanded joint name");
    }
  }

  if (out.type == JointType::LeadscrewFlexion) {
    const std::string rp = path + "/rocker";
    const json& rj = r.object(j, "rocker", path);
    const double stroke = r.length(rj, "stroke", rp);
    const auto a = r.optional_number(rj, "a", rp);
    const auto b = r.optional_number(rj, "b", rp);
    const auto base = r.optional_number(rj, "base_length", rp);
    const auto theta0 = r.optional_number(rj, "theta0_rad", rp);
    if (a && base && b && theta0) {
      out.rocker = {*a * r.units().length, *b * r.units().length, *theta0,
                    *base * r.units().length,  stroke, 1};
    } else if (a && base) {
      out.rocker = calibrate_rocker(stroke, out.limits.min_deg, out.limits.max_deg,
                                    *a * r.units().length, *base * r.units().length);
    } else {
      out.rocker = centered_rocker(stroke, out.limits.min_deg, out.limits.max_deg);
    }
    if (rj.contains("sign")) out.rocker.sign = r.integer(rj, "sign", rp);
  }
  return out;
}

Digit read_digit(const Reader& r, const json& j, const std::string& path) {
  Digit d;
  const auto label = r.string(j, "id", path);
  const auto id = parse_digit(label);
  if (!id) throw SchemaError(path + "/id", "unknown digit '" + label + "'");
  d.id = *id;
  d.name = r.string(j, "name", path);
  d.length_mm = r.length(j, "length", path);
  d.width_mm = r.length(j, "width", path);
  if (j.contains("phalanx_fractions")) {
    const json& f = r.array(j, "phalanx_fractions", path);
    if (f.size() != 3) throw SchemaError(path + "/phalanx_fractions", "expected 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!f[i].is_number()) {
        throw SchemaError(path + "/phalanx_fractions/" + std::to_string(i), "expected a number");
      }
      d.phalanx_fractions[i] = f[i].get<double>();
    }
  }
  const json& base = r.object(j, "base", path);
  d.base_position_mm = r.vec3(base, "position", path + "/base", r.units().length);
  d.base_rpy_deg = r.vec3(base, "rpy", path + "/base", r.units().angle);
  const json& joints = r.array(j, "joints", path);
  for (std::size_t i = 0; i < joints.size(); ++i) {
    d.joints.push_back(read_joint(r, joints[i], path + "/joints/" + std::to_string(i), d.id));
  }
  return d;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

HandDescription load_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("", "document must be an object");
  const Reader r(read_units(doc));

  HandDescription h;
  const json& palm = r.object(doc, "palm", "");
  h.palm.length_mm = r.length(palm, "length", "/palm");
  h.palm.width_mm = r.length(palm, "width", "/palm");

  const json& digits = r.array(doc, "digits", "");
  if (digits.size() != kDigitCount) {
    throw SchemaError("/digits", "expected 5 digits, got " + std::to_string(digits.size()));
  }
  std::array<bool, kDigitCount> seen{};
  for (std::size_t i = 0; i < digits.size(); ++i) {
    Digit d = read_digit(r, digits[i], "/digits/" + std::to_string(i));
    auto idx = static_cast<std::size_t>(d.id);
    if (seen[idx]) throw SchemaError("/digits/" + std::to_string(i) + "/id", "duplicate digit");
    seen[idx] = true;
    h.digits[idx] = std::move(d);
  }

  const std::string tp = "/transmission";
  const json& tj = r.object(doc, "transmission", "");
  auto& t = h.transmission;
  const json& fs = r.object(tj, "finger_screw", tp);
  t.finger_screw.lead_mm = r.length(fs, "lead", tp + "/finger_screw");
  t.finger_screw.mean_diameter_mm = r.length(fs, "mean_diameter", tp + "/finger_screw");
  t.finger_screw.mu = r.number(fs, "mu", tp + "/finger_screw");
  t.finger_screw.stroke_mm = r.length(fs, "stroke", tp + "/finger_screw");
  const json& cw = r.object(tj, "cmc_worm", tp);
  t.cmc_worm.lead_mm = r.length(cw, "lead", tp + "/cmc_worm");
  t.cmc_worm.pitch_diameter_mm = r.length(cw, "pitch_diameter", tp + "/cmc_worm");
  t.cmc_worm.mu = r.number(cw, "mu", tp + "/cmc_worm");
  t.cmc_worm.ratio = r.number(cw, "ratio", tp + "/cmc_worm");
  const std::string ap = tp + "/abduction";
  const json& ab = r.object(tj, "abduction", tp);
  t.abduction.pinion_teeth = r.integer(ab, "pinion_teeth", ap);
  t.abduction.bevel_teeth = r.integer(ab, "bevel_teeth", ap);
  t.abduction.servo_limits = {r.angle(ab, "servo_min", ap), r.angle(ab, "servo_max", ap)};
  if (!(t.abduction.servo_limits.max_deg > t.abduction.servo_limits.min_deg)) {
    throw InvariantError("abduction_servo: limit interval is empty (max <= min)");
  }
  const json& stages = r.array(ab, "stages", ap);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string sp = ap + "/stages/" + std::to_string(i);
    AbductionStage s;
    const auto label = r.string(stages[i], "digit", sp);
    const auto id = parse_digit(label);
    if (!id) throw SchemaError(sp + "/digit", "unknown digit '" + label + "'");
    if (*id == DigitId::D3) throw InvariantError("D3 carries no abduction coupling");
    s.digit = *id;
    s.worm_pitch_mm = r.length(stages[i], "worm_pitch", sp);
    const auto hand = r.string(stages[i], "hand", sp);
    if (hand != "left" && hand != "right") throw SchemaError(sp + "/hand", "expected left|right");
    s.left_handed = hand == "left";
    if (stages[i].contains("wheel_radius")) {
      s.wheel_radius_mm = r.length(stages[i], "wheel_radius", sp);
    } else {
      // Calibrate against the abduction joint limits of that digit.
      const Joint* joint = nullptr;
      for (const auto& j : h.digit(s.digit).joints) {
        if (j.type == JointType::CoupledAbduction) joint = &j;
      }
      if (joint == nullptr) {
        throw InvariantError(std::string(label) + ": abduction stage without an abduction joint");
      }
      s.wheel_radius_mm =
          abduction_wheel_radius(t.abduction, s.worm_pitch_mm, joint->limits.total());
    }
    t.abduction.stages.push_back(s);
  }
  t.nominal_motor_torque_nmm = r.number(tj, "nominal_motor_torque_nmm", tp);
  if (tj.contains("contact_fraction")) t.contact_fraction = r.number(tj, "contact_fraction", tp);

  const std::string wp = "/wrist";
  const json& wj = r.object(doc, "wrist", "");
  auto& w = h.wrist;
  w.length_mm = r.length(wj, "length", wp);
  w.width_mm = r.length(wj, "width", wp);
  w.lower_offset_mm = r.length(wj, "lower_offset", wp);
  w.upper_offset_mm = r.length(wj, "upper_offset", wp);
  w.lower_radius_mm = r.length(wj, "lower_radius", wp);
  w.anchor_azimuth_deg = r.angle(wj, "anchor_azimuth", wp);
  w.axis_tilt_deg = r.angle(wj, "axis_tilt", wp);
  w.min_length_mm = r.length(wj, "min_length", wp);
  w.stroke_mm = r.length(wj, "stroke", wp);
  w.swivel_limit_deg = r.angle(wj, "swivel_limit", wp);
  w.max_dynamic_force_n = r.number(wj, "max_dynamic_force_n", wp);
  w.fe_limits = {r.angle(wj, "fe_min", wp), r.angle(wj, "fe_max", wp)};
  w.rud_limits = {r.angle(wj, "rud_min", wp), r.angle(wj, "rud_max", wp)};

  const std::string bp = "/bus";
  const json& bj = r.object(doc, "bus", "");
  auto& b = h.bus;
  b.tick_hz = r.number(bj, "tick_hz", bp);
  b.encoder_cpr = r.integer(bj, "encoder_cpr", bp);
  b.gain_per_s = r.number(bj, "gain_per_s", bp);
  b.finger_speed_deg_s = r.number(bj, "finger_speed_deg_s", bp);
  b.cmc_speed_deg_s = r.number(bj, "cmc_speed_deg_s", bp);
  b.servo_speed_deg_s = r.number(bj, "servo_speed_deg_s", bp);
  b.wrist_speed_deg_s = r.number(bj, "wrist_speed_deg_s", bp);
  b.settle_margin_s = r.number(bj, "settle_margin_s", bp);
  b.drop_probability = r.number(bj, "drop_probability", bp);
  b.seed = static_cast<std::uint64_t>(r.integer(bj, "seed", bp));
  b.retry_limit = r.integer(bj, "retry_limit", bp);
  const json& nodes = r.array(bj, "nodes", bp);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string np = bp + "/nodes/" + std::to_string(i);
    NodeSpec n;
    const auto role = r.string(nodes[i], "role", np);
    const auto parsed = parse_node_role(role);
    if (!parsed) throw SchemaError(np + "/role", "unknown node role '" + role + "'");
    n.role = *parsed;
    n.address = r.integer(nodes[i], "address", np);
    if (nodes[i].contains("joints")) {
      const json& js = r.array(nodes[i], "joints", np);
      for (std::size_t k = 0; k < js.size(); ++k) {
        if (!js[k].is_string()) {
          throw SchemaError(np + "/joints/" + std::to_string(k), "expected a joint name");
        }
        const int c = command_index(js[k].get<std::string>());
        if (c < 0) {
          throw SchemaError(np + "/joints/" + std::to_string(k),
                            "unknown joint '" + js[k].get<std::string>() + "'");
        }
        n.commands.push_back(c);
      }
    }
    b.nodes.push_back(n);
  }

  validate(h);
  return h;
}

HandDescription load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HandError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str());
}

std::string serialize_config(const HandDescription& h) {
  json doc;
  doc["units"] = {{"length", "mm"}, {"angle", "deg"}};
  doc["palm"] = {{"length", h.palm.length_mm}, {"width", h.palm.width_mm}};
  json digits = json::array();
  for (const auto& d : h.digits) {
    json dj;
    dj["id"] = std::string(digit_label(d.id));
    dj["name"] = d.name;
    dj["length"] = d.length_mm;
    dj["width"] = d.width_mm;
    dj["phalanx_fractions"] = d.phalanx_fractions;
    dj["base"] = {{"position", vec_json(d.base_position_mm)}, {"rpy", vec_json(d.base_rpy_deg)}};
    json joints = json::array();
    for (const auto& j : d.joints) {
      json jj;
      jj["name"] = j.name;
      jj["type"] = std::string(joint_type_name(j.type));
      jj["min"] = j.limits.min_deg;
      jj["max"] = j.limits.max_deg;
      jj["axis"] = vec_json(j.axis);
      jj["offset_rpy"] = vec_json(j.offset_rpy_deg);
      if (j.link >= 0) jj["link"] = j.link;
      if (j.type == JointType::LeadscrewFlexion) {
        jj["rocker"] = {{"a", j.rocker.a_mm},
                        {"b", j.rocker.b_mm},
                        {"theta0_rad", j.rocker.theta0_rad},
                        {"base_length", j.rocker.base_length_mm},
                        {"stroke", j.rocker.stroke_mm},
                        {"sign", j.rocker.sign}};
      }
      joints.push_back(jj);
    }
    dj["joints"] = joints;
    digits.push_back(dj);
  }
  doc["digits"] = digits;

  const auto& t = h.transmission;
  json stages = json::array();
  for (const auto& s : t.abduction.stages) {
    stages.push_back({{"digit", std::string(digit_label(s.digit))},
                      {"worm_pitch", s.worm_pitch_mm},
                      {"wheel_radius", s.wheel_radius_mm},
                      {"hand", s.left_handed ? "left" : "right"}});
  }
  doc["transmission"] = {
      {"finger_screw",
       {{"lead", t.finger_screw.lead_mm},
        {"mean_diameter", t.finger_screw.mean_diameter_mm},
        {"mu", t.finger_screw.mu},
        {"stroke", t.finger_screw.stroke_mm}}},
      {"cmc_worm",
       {{"lead", t.cmc_worm.lead_mm},
        {"pitch_diameter", t.cmc_worm.pitch_diameter_mm},
        {"mu", t.cmc_worm.mu},
        {"ratio", t.cmc_worm.ratio}}},
      {"abduction",
       {{"pinion_teeth", t.abduction.pinion_teeth},
        {"bevel_teeth", t.abduction.bevel_teeth},
        {"servo_min", t.abduction.servo_limits.min_deg},
        {"servo_max", t.abduction.servo_limits.max_deg},
        {"stages", stages}}},
      {"nominal_motor_torque_nmm", t.nominal_motor_torque_nmm},
      {"contact_fraction", t.contact_fraction}};

  const auto& w = h.wrist;
  doc["wrist"] = {{"length", w.length_mm},
                  {"width", w.width_mm},
                  {"lower_offset", w.lower_offset_mm},
                  {"upper_offset", w.upper_offset_mm},
                  {"lower_radius", w.lower_radius_mm},
                  {"anchor_azimuth", w.anchor_azimuth_deg},
                  {"axis_tilt", w.axis_tilt_deg},
                  {"min_length", w.min_length_mm},
                  {"stroke", w.stroke_mm},
                  {"swivel_limit", w.swivel_limit_deg},
                  {"max_dynamic_force_n", w.max_dynamic_force_n},
                  {"fe_min", w.fe_limits.min_deg},
                  {"fe_max", w.fe_limits.max_deg},
                  {"rud_min", w.rud_limits.min_deg},
                  {"rud_max", w.rud_limits.max_deg}};

  const auto& b = h.bus;
  json nodes = json::array();
  for (const auto& n : b.nodes) {
    json joints = json::array();
    for (int c : n.commands) joints.push_back(std::string(kCommandNames[static_cast<std::size_t>(c)]));
    nodes.push_back({{"role", std::string(node_role_name(n.role))},
                     {"address", n.address},
                     {"joints", joints}});
  }
  doc["bus"] = {{"tick_hz", b.tick_hz},
                {"encoder_cpr", b.encoder_cpr},
                {"gain_per_s", b.gain_per_s},
                {"finger_speed_deg_s", b.finger_speed_deg_s},
                {"cmc_speed_deg_s", b.cmc_speed_deg_s},
                {"servo_speed_deg_s", b.servo_speed_deg_s},
                {"wrist_speed_deg_s", b.wrist_speed_deg_s},
                {"settle_margin_s", b.settle_margin_s},
                {"drop_probability", b.drop_probability},
                {"seed", b.seed},
                {"retry_limit", b.retry_limit},
                {"nodes", nodes}};
  return doc.dump(2) + "\n";
}

}  // namespace hand_twin
