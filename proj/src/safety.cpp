#include "kinhmd/safety.hpp"

#include <cmath>

#include <fmt/format.h>

namespace kinhmd::safety {

void SafetyConfig::validate() const {
  if (!(force_limit > 0.0) || force_limit > physiological_reference / 2.0) {
    throw ConfigError(fmt::format("force limit {} N outside (0, {}] N", force_limit, physiological_reference / 2.0));
  }
  if (!(jerk_limit > 0.0) || !std::isfinite(jerk_limit)) throw ConfigError("jerk limit must be positive");
  if (!(fade_duration >= 0.0) || !std::isfinite(fade_duration)) {
    throw ConfigError("fade duration must be non-negative");
  }
}

Vec3 clamp_force(const Vec3& f, double limit) {
  if (!f.allFinite()) throw HardFault("non-finite force command");
  const double norm = f.norm();
  if (norm <= limit) return f;
  Vec3 out = f * (limit / norm);
  // Rounding in the scale can leave the norm one ulp above the limit.
  while (out.norm() > limit) out *= std::nextafter(1.0, 0.0);
  return out;
}

Vec3 limit_jerk(const Vec3& prev, const Vec3& requested, double jerk_limit, double dt) {
  const Vec3 delta = requested - prev;
  const double max_step = jerk_limit * dt;
  const double norm = delta.norm();
  if (norm <= max_step) return requested;
  return prev + delta * (max_step / norm);
}

std::string_view to_string(KillState s) {
  switch (s) {
    case KillState::DISARMED: return "DISARMED";
    case KillState::ARMED: return "ARMED";
    case KillState::ENGAGED: return "ENGAGED";
    case KillState::KILLED: return "KILLED";
  }
  return "?";
}

std::string_view to_string(KillEvent e) {
  switch (e) {
    case KillEvent::arm: return "arm";
    case KillEvent::engage: return "engage";
    case KillEvent::release: return "release";
    case KillEvent::kill: return "kill";
    case KillEvent::rearm: return "rearm";
  }
  return "?";
}

std::optional<KillState> kill_state_from_string(std::string_view s) {
  for (auto st : {KillState::DISARMED, KillState::ARMED, KillState::ENGAGED, KillState::KILLED}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::optional<KillEvent> kill_event_from_string(std::string_view s) {
  for (auto ev : {KillEvent::arm, KillEvent::engage, KillEvent::release, KillEvent::kill, KillEvent::rearm}) {
    if (to_string(ev) == s) return ev;
  }
  return std::nullopt;
}

KillSwitch kill_transition(KillSwitch ks, KillEvent event, double now) {
  auto go = [&](KillState next) {
    ks.state = next;
    ks.last_transition = now;
    return ks;
  };
  if (event == KillEvent::kill) return go(KillState::KILLED);
  switch (ks.state) {
    case KillState::DISARMED:
      if (event == KillEvent::arm) return go(KillState::ARMED);
      break;
    case KillState::ARMED:
      if (event == KillEvent::engage) return go(KillState::ENGAGED);
      break;
    case KillState::ENGAGED:
      if (event == KillEvent::release) return go(KillState::ARMED);
      break;
    case KillState::KILLED:
      if (event == KillEvent::rearm) return go(KillState::DISARMED);
      break;
  }
  return ks;
}

Vec3 gate_output(const KillSwitch& ks, const Vec3& f, bool feed_live, const Vec3& last_output,
                 FadeState& fade, double fade_duration, double dt) {
  if (ks.state == KillState::KILLED) {
    fade = FadeState{};
    return Vec3::Zero();
  }
  if (ks.state == KillState::ENGAGED && feed_live) {
    fade = FadeState{};
    return f;
  }
  if (!fade.active) {
    fade.active = true;
    fade.start = last_output;
    fade.elapsed = 0.0;
  }
  fade.elapsed += dt;
  if (fade.elapsed >= fade_duration) return Vec3::Zero();
  return fade.start * (1.0 - fade.elapsed / fade_duration);
}

SafetyChain::SafetyChain(SafetyConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void SafetyChain::apply(KillEvent event, double now) {
  if (faulted_ && event != KillEvent::kill && event != KillEvent::rearm) return;
  ks_ = kill_transition(ks_, event, now);
  if (event == KillEvent::rearm && ks_.state == KillState::DISARMED) faulted_ = false;
}

void SafetyChain::fault(const std::string& reason, double now) {
  faulted_ = true;
  fault_reason_ = reason;
  ks_ = kill_transition(ks_, KillEvent::kill, now);
  fade_ = FadeState{};
  last_output_ = Vec3::Zero();
}

Vec3 SafetyChain::process(const Vec3& requested, bool feed_live, double now, double dt) {
  Vec3 clamped;
  try {
    clamped = clamp_force(requested, cfg_.force_limit);
  } catch (const HardFault& e) {
    fault(e.what(), now);
    return Vec3::Zero();
  }
  const Vec3 limited = limit_jerk(last_output_, clamped, cfg_.jerk_limit, dt);
  last_output_ = gate_output(ks_, limited, feed_live, last_output_, fade_, cfg_.fade_duration, dt);
  return last_output_;
}

CalibrationResult calibrate_gain(const std::string& user_id, const CalibrationResponder& responder,
                                 const SafetyConfig& cfg, double probe_accel) {
  cfg.validate();
  if (!(probe_accel > 0.0) || !std::isfinite(probe_accel)) throw ConfigError("probe acceleration must be positive");

  const double max_gain = cfg.force_limit / probe_accel;
  std::vector<double> gains;
  for (int i = 0; i < kCalibrationSteps; ++i) {
    const double frac = kCalibrationStartFraction +
                        (1.0 - kCalibrationStartFraction) * static_cast<double>(i) / (kCalibrationSteps - 1);
    double g = max_gain * frac;
    while (g * probe_accel > cfg.force_limit) g = std::nextafter(g, 0.0);
    gains.push_back(g);
  }

  CalibrationResult result;
  result.user_id = user_id;
  std::optional<double> best;
  for (double g : gains) {
    const auto verdict = responder(g, g * probe_accel);
    if (!verdict) {
      result.aborted = true;
      best.reset();
      break;
    }
    result.steps.push_back({g, *verdict});
    if (!*verdict) break;
    best = g;
  }
  if (result.steps.empty()) result.steps.push_back({gains.front(), false});
  result.accepted_gain = best.value_or(gains.front());
  return result;
}

}  // namespace kinhmd::safety
