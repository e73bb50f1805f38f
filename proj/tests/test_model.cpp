#include "hand_twin/actuation.hpp"
#include "hand_twin/model.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace hand_twin;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json default_doc() { return json::parse(serialize_config(default_hand())); }

const Joint& joint(const HandDescription& h, std::string_view name) {
  const Joint* j = h.find_joint(name);
  REQUIRE(j != nullptr);
  return *j;
}

}  // namespace

TEST_CASE("bundled config matches the built-in default") {
  const auto h = load_config_file(HAND_TWIN_DATA_DIR "/default_hand.json");
  CHECK(h == default_hand());
  CHECK(joint(h, "index_mcp").limits.total() == doctest::Approx(103.13).epsilon(1e-12));
}

TEST_CASE("default anthropometry") {
  const auto h = default_hand();
  CHECK(h.palm.length_mm == doctest::Approx(129.0));
  CHECK(joint(h, "thumb_cmc").limits.total() == doctest::Approx(106.24));
  CHECK(h.joint_count() == kJointCount);
  CHECK(h.transmission.abduction.stage_for(DigitId::D3) == nullptr);
  for (const auto& j : h.digit(DigitId::D3).joints) CHECK(j.type != JointType::CoupledAbduction);

  // Digit lengths, mm.
  CHECK(h.digit(DigitId::D1).length_mm == doctest::Approx(122.3));
  CHECK(h.digit(DigitId::D2).length_mm == doctest::Approx(130.1));
  CHECK(h.digit(DigitId::D3).length_mm == doctest::Approx(102.5));
  CHECK(h.digit(DigitId::D4).length_mm == doctest::Approx(130.9));
  CHECK(h.digit(DigitId::D5).length_mm == doctest::Approx(122.0));
  CHECK(h.wrist.length_mm == doctest::Approx(33.0));
  CHECK(validate(h).empty());
}

TEST_CASE("config errors") {
  SUBCASE("empty interval") {
    auto doc = default_doc();
    auto& j = doc["digits"][1]["joints"][1];
    j["max"] = j["min"];
    CHECK_THROWS_AS(load_config(doc.dump()), InvariantError);
  }
  SUBCASE("19 joints") {
    auto doc = default_doc();
    doc["digits"][2]["joints"].erase(2);
    try {
      load_config(doc.dump());
      FAIL("expected an invariant error");
    } catch (const InvariantError& e) {
      CHECK(std::string(e.what()).find("joint count is 19") != std::string::npos);
    }
  }
  SUBCASE("missing field names its path") {
    auto doc = default_doc();
    doc["wrist"].erase("stroke");
    try {
      load_config(doc.dump());
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(e.path() == "/wrist/stroke");
    }
  }
  SUBCASE("wrong type") {
    auto doc = default_doc();
    doc["bus"]["encoder_cpr"] = "many";
    CHECK_THROWS_AS(load_config(doc.dump()), SchemaError);
  }
  SUBCASE("unknown unit") {
    auto doc = default_doc();
    doc["units"]["length"] = "furlong";
    CHECK_THROWS_AS(load_config(doc.dump()), SchemaError);
  }
  SUBCASE("not JSON") { CHECK_THROWS_AS(load_config("{nope"), SchemaError); }
  SUBCASE("abduction on D3") {
    auto doc = default_doc();
    doc["transmission"]["abduction"]["stages"][0]["digit"] = "D3";
    CHECK_THROWS_AS(load_config(doc.dump()), InvariantError);
  }
}

TEST_CASE("units convert to mm and deg") {
  auto doc = default_doc();
  doc["units"]["length"] = "cm";
  doc["palm"]["length"] = 12.9;
  const auto h = load_config(doc.dump());
  CHECK(h.palm.length_mm == doctest::Approx(129.0));
}

TEST_CASE("partial rocker blocks are calibrated on load") {
  auto doc = default_doc();
  json* found = nullptr;
  for (auto& j : doc["digits"][1]["joints"]) {
    if (j["name"] == "index_mcp") found = &j["rocker"];
  }
  REQUIRE(found != nullptr);
  auto& rocker = *found;
  const double b = rocker["b"].get<double>();
  rocker.erase("b");
  rocker.erase("theta0_rad");
  const auto h = load_config(doc.dump());
  CHECK(joint(h, "index_mcp").rocker.b_mm == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("serialize round trip") {
  const auto h = default_hand();
  CHECK(load_config(serialize_config(h)) == h);
}

TEST_CASE("scale_hand") {
  const auto h = default_hand();
  CHECK(scale_hand(h, 1.0) == h);
  const auto big = scale_hand(h, 2.0);
  CHECK(big.palm.length_mm == doctest::Approx(258.0));
  CHECK(joint(big, "index_mcp").limits == joint(h, "index_mcp").limits);
  CHECK_THROWS_AS(scale_hand(h, 0.0), DomainError);
  CHECK_THROWS_AS(scale_hand(h, -1.0), DomainError);
  // Angles survive scaling: lead angle is a ratio of lengths.
  CHECK(lead_angle(big.transmission.finger_screw.lead_mm,
                   big.transmission.finger_screw.mean_diameter_mm) ==
        doctest::Approx(lead_angle(0.35, 2.5)));
}

TEST_CASE("state limits") {
  const auto h = default_hand();
  HandState s;
  CHECK_NOTHROW(check_state(h, s));
  s[kIndexMcp] = 500.0;
  CHECK_THROWS_AS(check_state(h, s), LimitError);
  CHECK(clamp_state(h, s)[kIndexMcp] == doctest::Approx(h.command_limits(kIndexMcp).max_deg));
}

TEST_CASE("command names") {
  CHECK(command_index("index_mcp") == kIndexMcp);
  CHECK(command_index("wrist_rud") == kWristRud);
  CHECK(command_index("nope") == -1);
  CHECK(parse_digit("D4") == DigitId::D4);
  CHECK_FALSE(parse_digit("D6").has_value());
}

TEST_CASE("config resolution falls back to the environment") {
  const std::string path = HAND_TWIN_DATA_DIR "/default_hand.json";
  auto doc = json::parse(read_file(path));
  doc["palm"]["length"] = 140.0;
  const std::string tmp = "resolve_config_test.json";
  std::ofstream(tmp) << doc.dump();
  ::setenv("HAND_TWIN_CONFIG", tmp.c_str(), 1);
  CHECK(resolve_config("").palm.length_mm == doctest::Approx(140.0));
  CHECK(resolve_config(path).palm.length_mm == doctest::Approx(129.0));
  ::unsetenv("HAND_TWIN_CONFIG");
  CHECK(resolve_config("") == default_hand());
  std::remove(tmp.c_str());
}
