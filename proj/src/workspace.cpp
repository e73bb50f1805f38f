#include "hand_twin/detail/chain.hpp"
#include "hand_twin/detail/random.hpp"
#include "hand_twin/kinematics.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace hand_twin {

WorkspaceCloud sample_workspace(const HandDescription& desc, DigitId digit, std::size_t n,
                                std::uint64_t seed) {
  if (n == 0) throw DomainError("workspace sample count must be > 0");
  WorkspaceCloud cloud;
  cloud.digit = digit;
  cloud.seed = seed;
  cloud.count = n;
  cloud.points.reserve(n);
  cloud.states.reserve(n);

  auto cmds = detail::digit_commands(desc, digit);
  cmds.resize(cmds.size() - 2);  // wrist held neutral
  std::vector<JointLimits> limits;
  for (int c : cmds) limits.push_back(desc.command_limits(c));

  const HandState base = clamp_state(desc, HandState{});
  detail::Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    HandState s = base;
    for (std::size_t k = 0; k < cmds.size(); ++k) {
      s[cmds[k]] = limits[k].min_deg + rng.uniform() * limits[k].total();
    }
    cloud.points.push_back(detail::walk_digit(desc, s, digit).tip);
    cloud.states.push_back(s);
  }
  return cloud;
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Vec3& p, double size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / size)),
          static_cast<std::int64_t>(std::floor(p.y() / size)),
          static_cast<std::int64_t>(std::floor(p.z() / size))};
}

}  // namespace

std::vector<ProximityPair> proximity_pairs(const WorkspaceCloud& a, const WorkspaceCloud& b,
                                           double radius_mm, std::size_t limit) {
  if (!(radius_mm > 0.0)) throw DomainError("proximity radius must be > 0");
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  for (std::size_t j = 0; j < b.points.size(); ++j) {
    grid[cell_of(b.points[j], radius_mm)].push_back(j);
  }
  std::vector<ProximityPair> out;
  const double r2 = radius_mm * radius_mm;
  for (std::size_t i = 0; i < a.points.size() && out.size() < limit; ++i) {
    const CellKey c = cell_of(a.points[i], radius_mm);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            const double d2 = (a.points[i] - b.points[j]).squaredNorm();
            if (d2 <= r2 && out.size() < limit) out.push_back({i, j, std::sqrt(d2)});
          }
        }
      }
    }
  }
  return out;
}

// Export formats ----------------------------------------------------------------------

void write_workspace_csv(std::ostream& os, std::span<const WorkspaceCloud> clouds) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << "digit,x_mm,y_mm,z_mm\n";
  for (const auto& c : clouds) {
    for (const auto& p : c.points) {
      os << digit_label(c.digit) << ',' << p.x() << ',' << p.y() << ',' << p.z() << '\n';
    }
  }
  os.precision(old);
}

std::vector<std::pair<DigitId, Vec3>> read_workspace_csv(std::istream& is) {
  std::vector<std::pair<DigitId, Vec3>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "digit,x_mm,y_mm,z_mm") throw DomainError("workspace CSV: bad header");
      continue;
    }
    std::istringstream ss(line);
    std::string field;
    std::array<std::string, 4> f;
    for (auto& x : f) {
      if (!std::getline(ss, x, ',')) {
        throw DomainError("workspace CSV line " + std::to_string(line_no) + ": missing field");
      }
    }
    const auto digit = parse_digit(f[0]);
    if (!digit) throw DomainError("workspace CSV line " + std::to_string(line_no) + ": bad digit");
    try {
      out.emplace_back(*digit, Vec3(std::stod(f[1]), std::stod(f[2]), std::stod(f[3])));
    } catch (const std::exception&) {
      throw DomainError("workspace CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'H', 'T', 'W', 'S'};
constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw DomainError("workspace binary: truncated");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& os, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_le(os, bits);
}

double get_f32(std::istream& is) {
  const auto bits = get_le<std::uint32_t>(is);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

}  // namespace

void write_workspace_binary(std::ostream& os, std::span<const WorkspaceCloud> clouds) {
  std::uint64_t count = 0;
  for (const auto& c : clouds) count += c.points.size();
  os.write(kMagic, 4);
  put_le(os, kBinaryVersion);
  put_le(os, count);
  for (const auto& c : clouds) {
    for (const auto& p : c.points) {
      put_le(os, static_cast<std::uint8_t>(c.digit));
      put_f32(os, p.x());
      put_f32(os, p.y());
      put_f32(os, p.z());
    }
  }
}

std::vector<std::pair<DigitId, Vec3>> read_workspace_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DomainError("workspace binary: bad magic");
  }
  if (get_le<std::uint32_t>(is) != kBinaryVersion) {
    throw DomainError("workspace binary: unsupported version");
  }
  const auto count = get_le<std::uint64_t>(is);
  std::vector<std::pair<DigitId, Vec3>> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto d = get_le<std::uint8_t>(is);
    if (d >= kDigitCount) throw DomainError("workspace binary: bad digit");
    const double x = get_f32(is);
    const double y = get_f32(is);
    const double z = get_f32(is);
    out.emplace_back(static_cast<DigitId>(d), Vec3(x, y, z));
  }
  return out;
}

}  // namespace hand_twin
