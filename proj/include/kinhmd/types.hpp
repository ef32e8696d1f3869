#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace kinhmd {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Error hierarchy. Everything thrown by the library derives from Error so
// callers at the CLI/service boundary can catch a single type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class HardFault : public Error {
 public:
  using Error::Error;
};

/// Timestamped linear acceleration of the virtual viewpoint, vehicle frame
/// (x forward, y lateral, z vertical), in m/s^2.
struct AccelerationSample {
  double timestamp = 0.0;
  Vec3 accel = Vec3::Zero();
};

/// Simulated head pose inside the device workspace. Position is relative to
/// the workspace center.
struct HeadState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 angular_velocity = Vec3::Zero();
};

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace kinhmd
