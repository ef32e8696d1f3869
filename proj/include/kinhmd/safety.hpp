#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kinhmd/types.hpp"

namespace kinhmd::safety {

/// Neck-load reference used to bound force_limit: healthy adult necks
/// tolerate loads of this order in any direction.
inline constexpr double kPhysiologicalReference = 100.0;  // N

struct SafetyConfig {
  double force_limit = 10.0;   // N
  double jerk_limit = 200.0;   // N/s, reaches the 10 N cap in 50 ms
  double fade_duration = 0.25; // s
  double physiological_reference = kPhysiologicalReference;

  /// 0 < force_limit <= physiological_reference / 2, jerk_limit > 0, fade >= 0.
  void validate() const;
};

/// Radial clamp: direction is preserved, magnitude capped at `limit`.
/// Throws HardFault on non-finite input.
Vec3 clamp_force(const Vec3& f, double limit);

/// Moves from `prev` toward `requested` by at most jerk_limit * dt.
Vec3 limit_jerk(const Vec3& prev, const Vec3& requested, double jerk_limit, double dt);

enum class KillState { DISARMED, ARMED, ENGAGED, KILLED };
enum class KillEvent { arm, engage, release, kill, rearm };

std::string_view to_string(KillState s);
std::string_view to_string(KillEvent e);
std::optional<KillState> kill_state_from_string(std::string_view s);
std::optional<KillEvent> kill_event_from_string(std::string_view s);

struct KillSwitch {
  KillState state = KillState::DISARMED;
  double last_transition = 0.0;
};

/// DISARMED -arm-> ARMED -engage-> ENGAGED -release-> ARMED; kill from any
/// state goes to KILLED, which only rearm leaves (to DISARMED). Anything
/// else is a no-op.
KillSwitch kill_transition(KillSwitch ks, KillEvent event, double now);

/// Latched kill request, set from any thread and consumed by the control
/// loop once per tick. A set latch is never lost.
class KillLatch {
 public:
  void trigger() { latched_.store(true, std::memory_order_release); }
  bool consume() { return latched_.exchange(false, std::memory_order_acq_rel); }
  bool pending() const { return latched_.load(std::memory_order_acquire); }

 private:
  std::atomic<bool> latched_{false};
};

struct FadeState {
  bool active = false;
  Vec3 start = Vec3::Zero();
  double elapsed = 0.0;
};

/// Output gate. ENGAGED with a live feed passes `f` and cancels any fade.
/// ENGAGED with a stale feed, or any non-KILLED state, fades linearly from
/// the last output to zero over fade_duration. KILLED is zero immediately.
Vec3 gate_output(const KillSwitch& ks, const Vec3& f, bool feed_live, const Vec3& last_output,
                 FadeState& fade, double fade_duration, double dt);

/// Stateful render-side safety chain: clamp, jerk limit, kill gate.
class SafetyChain {
 public:
  explicit SafetyChain(SafetyConfig cfg);

  const SafetyConfig& config() const { return cfg_; }
  const KillSwitch& kill_switch() const { return ks_; }
  const Vec3& last_output() const { return last_output_; }
  bool faulted() const { return faulted_; }
  const std::string& fault_reason() const { return fault_reason_; }

  void apply(KillEvent event, double now);
  /// Forces the KILLED state and records a hard fault.
  void fault(const std::string& reason, double now);

  /// One tick of clamp -> jerk limit -> gate. Non-finite requests fault the
  /// chain and yield zero.
  Vec3 process(const Vec3& requested, bool feed_live, double now, double dt);

 private:
  SafetyConfig cfg_;
  KillSwitch ks_;
  FadeState fade_;
  Vec3 last_output_ = Vec3::Zero();
  bool faulted_ = false;
  std::string fault_reason_;
};

struct CalibrationStep {
  double gain = 0.0;
  bool accepted = false;
};

struct CalibrationResult {
  std::string user_id;
  double accepted_gain = 0.0;
  std::vector<CalibrationStep> steps;
  bool aborted = false;
};

/// Responder verdict for one probe: true = acceptable, false = too strong,
/// nothing = no answer (timeout).
using CalibrationResponder = std::function<std::optional<bool>(double gain, double probe_force)>;

inline constexpr int kCalibrationSteps = 5;
inline constexpr double kCalibrationStartFraction = 0.25;

/// Ascending staircase over kCalibrationSteps gains spread linearly from
/// 25% to 100% of force_limit / probe_accel. Stops at the first rejection
/// and keeps the highest accepted gain; with no accepted gain, or on a
/// timeout, the lowest step is used.
CalibrationResult calibrate_gain(const std::string& user_id, const CalibrationResponder& responder,
                                 const SafetyConfig& cfg, double probe_accel);

}  // namespace kinhmd::safety
