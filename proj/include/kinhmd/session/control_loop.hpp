#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kinhmd/cueing.hpp"
#include "kinhmd/device.hpp"
#include "kinhmd/safety.hpp"
#include "kinhmd/session/config.hpp"
#include "kinhmd/stimulus.hpp"
#include "kinhmd/telemetry.hpp"

namespace kinhmd::session {

/// Acceleration fed to the cueing stage on one tick, plus whether the
/// source is currently trustworthy (a stale live feed is not).
struct TickInput {
  AccelerationSample sample;
  bool live = true;
};

class InputSource {
 public:
  virtual ~InputSource() = default;
  virtual TickInput sample(double now) = 0;
};

/// The synthetic double-step, starting at `start_time`; zero outside it.
class StimulusSource final : public InputSource {
 public:
  explicit StimulusSource(stimulus::StimulusPattern pattern, double start_time = 0.0);
  TickInput sample(double now) override;

 private:
  stimulus::StimulusPattern pattern_;
  double start_;
};

/// Linear interpolation over a recorded trace starting at `start_time`.
class TraceSource final : public InputSource {
 public:
  explicit TraceSource(stimulus::Trace trace, double start_time = 0.0);
  TickInput sample(double now) override;

 private:
  stimulus::Trace trace_;
  double start_;
};

/// Zero-order hold on the telemetry mailbox with staleness tracking.
class MailboxSource final : public InputSource {
 public:
  MailboxSource(const telemetry::LatestSampleMailbox& mailbox, double staleness_timeout);
  TickInput sample(double now) override;
  const telemetry::FeedStatus& status() const { return status_; }

 private:
  const telemetry::LatestSampleMailbox& mailbox_;
  telemetry::FeedStatus status_;
};

/// Operator request crossing into the control loop.
struct Command {
  enum class Type { safety_event, set_gain, set_mode, start_trial, rate };
  Type type = Type::safety_event;
  safety::KillEvent event = safety::KillEvent::arm;
  double value = 0.0;
  cueing::Mode mode = cueing::Mode::none;
  int trial_index = -1;
  std::array<int, 3> ratings{};
  std::uint64_t origin = 0;  // client id for replies, 0 = local
};

/// Bounded MPSC queue drained by the control loop between ticks.
class CommandQueue {
 public:
  explicit CommandQueue(std::size_t capacity = 256) : capacity_(capacity) {}
  bool push(const Command& c);
  std::vector<Command> drain();

 private:
  std::mutex mu_;
  std::deque<Command> q_;
  std::size_t capacity_;
};

/// Read-only copy of the loop state handed to observers.
struct Snapshot {
  double t = 0.0;
  Vec3 force = Vec3::Zero();
  HeadState head;
  safety::KillState safety = safety::KillState::DISARMED;
  double gain = 0.0;
  cueing::Mode mode = cueing::Mode::none;
  int trial_index = -1;
  std::string trial_phase = "idle";
  double mean_tick_us = 0.0;
};

struct TimingStats {
  std::uint64_t ticks = 0;
  double total_us = 0.0;
  double max_us = 0.0;
  std::uint64_t overruns = 0;

  double mean_us() const { return ticks ? total_us / static_cast<double>(ticks) : 0.0; }
  double overrun_ratio() const { return ticks ? static_cast<double>(overruns) / static_cast<double>(ticks) : 0.0; }
};

/// Owns cueing, safety and plant state. Single-threaded: only the loop
/// thread calls tick(). Other threads talk to it through kill_latch(),
/// commands() and the snapshot callback.
class ControlLoop {
 public:
  explicit ControlLoop(SessionConfig cfg);

  /// One control tick at time index tick_index() * dt: drain commands and
  /// the kill latch, run cueing/safety, send to the device, step the plant.
  /// A device or plant fault kills the session and rethrows HardFault.
  cueing::WrenchCommand tick(const TickInput& input);

  double now() const { return static_cast<double>(ticks_) * dt_; }
  double dt() const { return dt_; }
  std::uint64_t tick_index() const { return ticks_; }

  void apply(safety::KillEvent event) { safety_.apply(event, now()); }
  void arm_and_engage();
  safety::KillLatch& kill_latch() { return kill_latch_; }
  CommandQueue& commands() { return commands_; }

  /// Gain changes are clamped to [0, max_gain()].
  void set_gain(double gain);
  double max_gain() const { return max_gain_; }
  /// Tightens the gain bound to a calibrated value.
  void set_calibrated_max_gain(double g);
  void set_mode(cueing::Mode mode) { cfg_.cueing.mode = mode; }

  const SessionConfig& config() const { return cfg_; }
  const cueing::CueingConfig& cueing_config() const { return cfg_.cueing; }
  const safety::SafetyChain& safety() const { return safety_; }
  const device::SimulatedDevice& device() const { return device_; }
  device::SimulatedDevice& device() { return device_; }
  const TimingStats& timing() const { return timing_; }
  TimingStats& timing() { return timing_; }

  /// Commands the loop does not handle itself (trial control, ratings).
  /// When set it also receives set_mode, so an owner running trials can
  /// keep the mode under its control.
  void set_command_handler(std::function<void(const Command&)> h) { command_handler_ = std::move(h); }
  /// Called every `every_n_ticks` ticks with a fresh snapshot.
  void set_snapshot_sink(std::function<void(const Snapshot&)> sink, std::uint64_t every_n_ticks);
  void set_trial_status(int index, std::string phase);
  Snapshot snapshot() const;

 private:
  void handle(const Command& c);

  SessionConfig cfg_;
  double dt_;
  std::uint64_t ticks_ = 0;
  safety::SafetyChain safety_;
  cueing::WashoutState washout_;
  device::SimulatedDevice device_;
  safety::KillLatch kill_latch_;
  CommandQueue commands_;
  double max_gain_;
  TimingStats timing_;
  Vec3 last_force_ = Vec3::Zero();
  int trial_index_ = -1;
  std::string trial_phase_ = "idle";
  std::function<void(const Command&)> command_handler_;
  std::function<void(const Snapshot&)> snapshot_sink_;
  std::uint64_t snapshot_every_ = 0;
};

enum class Pacing { free_run, realtime };

/// Fixed-period scheduler on the steady clock. Sleeps until shortly before
/// each deadline, then spins the remainder.
class Pacer {
 public:
  explicit Pacer(double period_s);
  /// Blocks until the start of the next period.
  void wait_next();
  /// True if the tick that started at the last wait_next() finished after
  /// its period ended.
  bool finished_late() const;

 private:
  using Clock = std::chrono::steady_clock;
  Clock::duration period_;
  Clock::time_point next_;
};

struct RunOptions {
  Pacing pacing = Pacing::free_run;
  bool auto_engage = true;
  bool record_input = false;
  /// Called before each tick with the loop (fuzzers inject kills here).
  std::function<void(ControlLoop&)> before_tick;
  /// Replaces the source named in the config when set.
  InputSource* source = nullptr;
};

struct RunReport {
  device::DeviceLog log;
  TimingStats timing;
  std::uint64_t ticks = 0;
  bool hard_fault = false;
  std::string fault_reason;
  std::vector<std::string> warnings;
  /// Per-tick inputs actually used, when record_input is set.
  stimulus::Trace recorded_input;
};

/// Creates the input source named by cfg.source. `mailbox` is required for
/// live UDP.
std::unique_ptr<InputSource> make_source(const SessionConfig& cfg, const telemetry::LatestSampleMailbox* mailbox);

/// Runs ceil(duration * tick_rate) ticks on a fresh loop. Writes the log to
/// cfg.log_path when set, including after a hard fault.
RunReport run_loop(const SessionConfig& cfg, double duration, const RunOptions& opts = {});

/// Drives an existing loop for `ticks` ticks with the given pacing; returns
/// false if a hard fault stopped it early.
bool drive(ControlLoop& loop, InputSource& source, std::uint64_t ticks, Pacing pacing,
           const std::function<void(ControlLoop&)>& before_tick = {}, stimulus::Trace* recorded = nullptr);

}  // namespace kinhmd::session
