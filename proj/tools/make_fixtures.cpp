// Regenerates the bundled data files: default config and the two traces.
// Usage: make_fixtures DATA_DIR

#include "hand_twin/model.hpp"
#include "hand_twin/teleop.hpp"

#include <fstream>
#include <iostream>

using namespace hand_twin;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures DATA_DIR\n";
    return 2;
  }
  const std::string dir = argv[1];
  const auto desc = default_hand();
  const auto mapping = teleop::default_mapping(desc);
  try {
    std::ofstream(dir + "/default_hand.json") << serialize_config(desc);
    std::ofstream sample(dir + "/traces/sample.jsonl");
    teleop::write_trace(sample, teleop::sample_sweep_trace(desc, mapping));
    std::ofstream opposition(dir + "/traces/opposition.jsonl");
    teleop::write_trace(opposition, teleop::opposition_trace(desc, mapping).frames);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
