#include "hand_twin/actuation.hpp"
#include "hand_twin/kinematics.hpp"
#include "hand_twin/model.hpp"
#include "hand_twin/service.hpp"
#include "hand_twin/wrist.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace hand_twin;

namespace {

DigitId digit_arg(const std::string& label) {
  const auto d = parse_digit(label);
  if (!d) throw py::value_error("unknown digit: " + label);
  return *d;
}

HandState state_arg(const std::vector<double>& values) {
  if (values.size() != kCommandCount)
    throw py::value_error("state needs " + std::to_string(kCommandCount) + " values");
  HandState s;
  std::copy(values.begin(), values.end(), s.values.begin());
  return s;
}

std::vector<double> state_list(const HandState& s) {
  return {s.values.begin(), s.values.end()};
}

py::dict lock_dict(const SelfLockReport& r) {
  py::dict d;
  d["lead_angle_deg"] = r.lead_angle_deg;
  d["friction_angle_deg"] = r.friction_angle_deg;
  d["margin_deg"] = r.margin_deg;
  d["locking"] = r.locking;
  return d;
}

py::dict wrist_dict(const WristSolution& s) {
  py::dict d;
  d["length_mm"] = s.length_mm;
  d["swivel_deg"] = s.swivel_deg;
  d["feasible"] = s.feasible();
  d["binding"] = s.binding;
  return d;
}

// JSON crosses the boundary as text; the Python side decodes it.
py::object to_py(const service::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dexterous hand digital twin";

  py::register_exception<HandError>(m, "HandError", PyExc_RuntimeError);

  m.attr("COMMAND_NAMES") = [] {
    std::vector<std::string> v;
    for (auto n : kCommandNames) v.emplace_back(n);
    return v;
  }();

  py::class_<HandDescription>(m, "Hand")
      .def(py::init([] { return default_hand(); }))
      .def_static("from_json", [](const std::string& text) { return load_config(text); })
      .def_static("from_file", &load_config_file)
      .def("to_json", &serialize_config)
      .def("validate", &validate)
      .def("scaled", &scale_hand, py::arg("factor"));

  m.def("lead_angle", &lead_angle, py::arg("lead_mm"), py::arg("mean_diameter_mm"));
  m.def("friction_angle", &friction_angle, py::arg("mu"));
  m.def("self_lock", [](const HandDescription& h) {
    py::dict d;
    d["finger_screw"] = lock_dict(self_lock_margin(h.transmission.finger_screw));
    d["cmc_worm"] = lock_dict(self_lock_margin(h.transmission.cmc_worm));
    return d;
  });

  m.def("rom", [](const HandDescription& h) {
    const auto r = rom_report(h);
    py::list rows;
    for (const auto& row : r.rows) {
      py::dict d;
      d["part"] = row.part;
      d["joint"] = row.joint;
      d["hand_deg"] = row.hand_deg;
      d["human_deg"] = row.human_deg;
      rows.append(d);
    }
    py::dict d;
    d["rows"] = rows;
    d["advantage_with_wrist"] = r.advantage_with_wrist;
    d["advantage_fingers_only"] = r.advantage_fingers_only;
    return d;
  });

  m.def("tips", [](const HandDescription& h, const std::vector<double>& state) {
    const auto poses = forward_kinematics(h, state_arg(state));
    py::dict d;
    for (const auto& dp : poses.digits)
      d[py::str(std::string(digit_label(dp.digit)))] = Vec3(dp.tip.position);
    return d;
  }, py::arg("hand"), py::arg("state"));

  m.def("solve_ik", [](const HandDescription& h, const std::string& digit, const Vec3& tip,
                       std::optional<std::vector<double>> seed, double tol_mm) {
    const IkTarget target{digit_arg(digit), TargetPoint::Tip, tip, kTipWeight};
    IkOptions opt;
    opt.tol_mm = tol_mm;
    const auto r = solve_ik(h, std::span(&target, 1), seed ? state_arg(*seed) : HandState{}, opt);
    py::dict d;
    d["status"] = std::string(ik_status_name(r.status));
    d["residual_mm"] = r.residual_mm;
    d["state"] = state_list(r.state);
    d["iterations"] = r.iterations;
    return d;
  }, py::arg("hand"), py::arg("digit"), py::arg("tip"), py::arg("seed") = py::none(),
     py::arg("tol_mm") = 1e-3);

  m.def("sample_workspace", [](const HandDescription& h, const std::string& digit,
                               std::size_t n, std::uint64_t seed) {
    const auto cloud = sample_workspace(h, digit_arg(digit), n, seed);
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> pts(cloud.points.size(), 3);
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
      pts.row(static_cast<Eigen::Index>(i)) = cloud.points[i].transpose();
    return pts;
  }, py::arg("hand"), py::arg("digit"), py::arg("n"), py::arg("seed") = 1);

  m.def("opposition", [](const HandDescription& h, const std::string& finger, double tol_mm,
                         bool thumb_only) {
    OppositionOptions opt;
    opt.tol_mm = tol_mm;
    opt.thumb_only = thumb_only;
    const auto r = opposition_check(h, digit_arg(finger), opt);
    py::dict d;
    d["success"] = r.success;
    d["distance_mm"] = r.distance_mm;
    d["state"] = state_list(r.state);
    return d;
  }, py::arg("hand"), py::arg("finger"), py::arg("tol_mm") = 5.0, py::arg("thumb_only") = false);

  m.def("wrist_ik", [](const HandDescription& h, double fe, double rud) {
    return wrist_dict(wrist_solve(h.wrist, {fe, rud}));
  }, py::arg("hand"), py::arg("fe_deg"), py::arg("rud_deg"));

  m.def("wrist_fk", [](const HandDescription& h, const std::array<double, 2>& lengths) {
    const auto p = wrist_fk(h.wrist, lengths);
    return std::make_pair(p.fe_deg, p.rud_deg);
  }, py::arg("hand"), py::arg("lengths_mm"));

  m.def("wrist_envelope", [](const HandDescription& h, double step) {
    const auto e = wrist_envelope(h.wrist, step);
    py::dict d;
    d["flexion_deg"] = e.max_flexion_deg;
    d["extension_deg"] = e.max_extension_deg;
    d["radial_deg"] = e.max_radial_deg;
    d["ulnar_deg"] = e.max_ulnar_deg;
    d["flexion_binding"] = e.flexion_binding;
    d["extension_binding"] = e.extension_binding;
    d["radial_binding"] = e.radial_binding;
    d["ulnar_binding"] = e.ulnar_binding;
    return d;
  }, py::arg("hand"), py::arg("step_deg") = 0.5);

  py::class_<service::Core>(m, "Twin")
      .def(py::init<HandDescription>(), py::arg("hand") = default_hand())
      .def("handle", [](service::Core& c, const std::string& text) { return to_py(c.handle(text)); })
      .def("step", [](service::Core& c, double dt) { return to_py(c.step(dt)); }, py::arg("dt"))
      .def("state", [](const service::Core& c) { return to_py(c.state()); })
      .def_property_readonly("sequence", &service::Core::sequence);
}
