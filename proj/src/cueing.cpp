#include "kinhmd/cueing.hpp"

#include <cmath>

#include <fmt/format.h>

namespace kinhmd::cueing {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::none: return "none";
    case Mode::direct: return "direct";
    case Mode::indirect: return "indirect";
  }
  return "?";
}

std::optional<Mode> mode_from_string(std::string_view s) {
  for (auto m : {Mode::none, Mode::direct, Mode::indirect}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

void WashoutConfig::validate(double force_limit) const {
  if (!(recenter_force_cap > 0.0) || !(recenter_force_cap < force_limit)) {
    throw ConfigError(fmt::format("washout force cap {} N must be in (0, {}) N", recenter_force_cap, force_limit));
  }
  if (!(recenter_stiffness >= 0.0) || !std::isfinite(recenter_stiffness)) {
    throw ConfigError("washout stiffness must be non-negative");
  }
  if (!(activation_delay >= 0.0) || !(idle_accel_threshold >= 0.0)) {
    throw ConfigError("washout delay and idle threshold must be non-negative");
  }
  if (!workspace_center.allFinite()) throw ConfigError("washout workspace center must be finite");
}

void CueingConfig::validate(double force_limit) const {
  if (!(gain >= 0.0) || !std::isfinite(gain)) throw ConfigError("cueing gain must be non-negative");
  if (!(torque_deadband > 0.0) || !std::isfinite(torque_deadband)) {
    throw ConfigError("torque deadband must be positive");
  }
  washout.validate(force_limit);
}

Vec3 render_force(const CueingConfig& cfg, const AccelerationSample& a) {
  switch (cfg.mode) {
    case Mode::direct: return cfg.gain * a.accel;
    case Mode::indirect: return -(cfg.gain * a.accel);
    case Mode::none: break;
  }
  return Vec3::Zero();
}

TorqueMode torque_policy(const Vec3& force, double deadband) {
  const double norm = force.norm();
  if (!(norm > deadband)) return TorqueMode::free();
  return TorqueMode::cylinder(force / norm);
}

Vec3 washout_step(const WashoutConfig& cfg, WashoutState& state, const HeadState& head, const Vec3& input_accel,
                  double dt) {
  if (input_accel.norm() >= cfg.idle_accel_threshold) {
    state.idle_time = 0.0;
    return Vec3::Zero();
  }
  state.idle_time += dt;
  if (state.idle_time < cfg.activation_delay) return Vec3::Zero();

  const Vec3 spring = -cfg.recenter_stiffness * (head.position - cfg.workspace_center);
  return safety::clamp_force(spring, cfg.recenter_force_cap);
}

WrenchCommand cueing_tick(const CueingConfig& cfg, const AccelerationSample& a, const HeadState& head,
                          safety::SafetyChain& safety, WashoutState& washout, bool feed_live, double now, double dt) {
  Vec3 requested = render_force(cfg, a);
  if (cfg.washout_enabled) requested += washout_step(cfg.washout, washout, head, a.accel, dt);

  WrenchCommand cmd;
  cmd.timestamp = now;
  cmd.force = safety.process(requested, feed_live, now, dt);
  cmd.torque = torque_policy(cmd.force, cfg.torque_deadband);
  return cmd;
}

}  // namespace kinhmd::cueing
