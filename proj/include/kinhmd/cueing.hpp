#pragma once

#include <optional>
#include <string_view>

#include "kinhmd/safety.hpp"
#include "kinhmd/types.hpp"

namespace kinhmd::cueing {

enum class Mode { none, direct, indirect };

std::string_view to_string(Mode m);
std::optional<Mode> mode_from_string(std::string_view s);

/// Gated recentering spring. Only acts after the input has been quiet for
/// activation_delay, and never pushes harder than recenter_force_cap.
struct WashoutConfig {
  double recenter_stiffness = 20.0;   // N/m
  double recenter_force_cap = 0.5;    // N; placeholder, not validated against perception thresholds
  double activation_delay = 1.0;      // s
  double idle_accel_threshold = 0.2;  // m/s^2
  Vec3 workspace_center = Vec3::Zero();

  void validate(double force_limit) const;
};

struct CueingConfig {
  Mode mode = Mode::indirect;
  double gain = 2.0;             // N per m/s^2
  double torque_deadband = 1.0;  // N
  bool washout_enabled = false;
  WashoutConfig washout;

  void validate(double force_limit) const;
};

enum class TorqueKind { free, cylinder_joint };

struct TorqueMode {
  TorqueKind kind = TorqueKind::free;
  Vec3 axis = Vec3::Zero();  // unit vector when kind == cylinder_joint

  static TorqueMode free() { return {}; }
  static TorqueMode cylinder(const Vec3& axis) { return {TorqueKind::cylinder_joint, axis}; }
};

struct WrenchCommand {
  Vec3 force = Vec3::Zero();
  TorqueMode torque;
  double timestamp = 0.0;
};

/// Acceleration-proportional force: +G*a (direct), -G*a (indirect), zero (none).
Vec3 render_force(const CueingConfig& cfg, const AccelerationSample& a);

/// |F| <= deadband leaves the head free; above it, a virtual cylinder joint
/// along F holds the other two rotational axes.
TorqueMode torque_policy(const Vec3& force, double deadband);

/// Idle timer for the washout gate.
struct WashoutState {
  double idle_time = 0.0;
};

/// Additive recentering force. Updates the idle timer with this tick's input.
Vec3 washout_step(const WashoutConfig& cfg, WashoutState& state, const HeadState& head, const Vec3& input_accel,
                  double dt);

/// One control tick: render -> washout -> clamp -> jerk limit -> kill gate
/// -> torque policy. Always produces a command.
WrenchCommand cueing_tick(const CueingConfig& cfg, const AccelerationSample& a, const HeadState& head,
                          safety::SafetyChain& safety, WashoutState& washout, bool feed_live, double now, double dt);

}  // namespace kinhmd::cueing
