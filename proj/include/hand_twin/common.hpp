#pragma once

#include <Eigen/Dense>

#include <numbers>
#include <stdexcept>
#include <string>

namespace hand_twin {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Base class for every error raised by the library.
class HandError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Config document does not match the schema. `path()` is a JSON pointer.
class SchemaError : public HandError {
public:
  SchemaError(std::string path, const std::string& what)
      : HandError(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

/// A model invariant does not hold (joint count, empty interval, ...).
class InvariantError : public HandError {
public:
  using HandError::HandError;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public HandError {
public:
  using HandError::HandError;
};

/// Commanded or requested joint value outside its limits.
class LimitError : public HandError {
public:
  using HandError::HandError;
};

/// Nut travel outside the usable screw stroke (triangle still closes).
class StrokeError : public HandError {
public:
  using HandError::HandError;
};

/// Rocker link lengths cannot form a triangle for the requested travel.
class TriangleError : public HandError {
public:
  using HandError::HandError;
};

/// No solution satisfying the stated constraints.
class InfeasibleError : public HandError {
public:
  using HandError::HandError;
};

}  // namespace hand_twin
