#include "kinhmd/session/control_loop.hpp"

#include <cmath>
#include <thread>

#include <fmt/format.h>

namespace kinhmd::session {

using Clock = std::chrono::steady_clock;

StimulusSource::StimulusSource(stimulus::StimulusPattern pattern, double start_time)
    : pattern_(pattern), start_(start_time) {
  pattern_.validate();
}

TickInput StimulusSource::sample(double now) {
  const double t = now - start_;
  TickInput in;
  in.sample.timestamp = now;
  if (t >= 0.0 && t <= pattern_.total_duration()) {
    in.sample.accel = Vec3(stimulus::eval_pattern(pattern_, t), 0.0, 0.0);
  }
  return in;
}

TraceSource::TraceSource(stimulus::Trace trace, double start_time) : trace_(std::move(trace)), start_(start_time) {
  if (trace_.samples.empty()) throw ConfigError("trace replay needs a non-empty trace");
}

TickInput TraceSource::sample(double now) {
  TickInput in;
  in.sample.timestamp = now;
  const double t = now - start_;
  if (t >= 0.0) in.sample.accel = stimulus::interpolate(trace_, t);
  return in;
}

MailboxSource::MailboxSource(const telemetry::LatestSampleMailbox& mailbox, double staleness_timeout)
    : mailbox_(mailbox) {
  status_.staleness_timeout = staleness_timeout;
}

TickInput MailboxSource::sample(double now) {
  TickInput in;
  in.sample.timestamp = now;
  if (auto s = mailbox_.read()) {
    status_ = telemetry::record_sample(status_, s->timestamp);
    in.sample.accel = s->accel;
  }
  status_ = telemetry::check_staleness(status_, now);
  in.live = status_.state == telemetry::FeedState::live;
  return in;
}

bool CommandQueue::push(const Command& c) {
  std::lock_guard lock(mu_);
  if (q_.size() >= capacity_) return false;
  q_.push_back(c);
  return true;
}

std::vector<Command> CommandQueue::drain() {
  std::lock_guard lock(mu_);
  std::vector<Command> out(q_.begin(), q_.end());
  q_.clear();
  return out;
}

ControlLoop::ControlLoop(SessionConfig cfg)
    : cfg_(std::move(cfg)),
      dt_(1.0 / cfg_.tick_rate),
      safety_((cfg_.validate(), cfg_.safety)),
      device_(cfg_.plant),
      max_gain_(cfg_.safety.force_limit / cfg_.gain_reference_accel) {
  cfg_.cueing.gain = std::clamp(cfg_.cueing.gain, 0.0, max_gain_);
}

void ControlLoop::arm_and_engage() {
  apply(safety::KillEvent::arm);
  apply(safety::KillEvent::engage);
}

void ControlLoop::set_gain(double gain) {
  if (!std::isfinite(gain)) return;
  cfg_.cueing.gain = std::clamp(gain, 0.0, max_gain_);
}

void ControlLoop::set_calibrated_max_gain(double g) {
  max_gain_ = std::clamp(g, 0.0, cfg_.safety.force_limit / cfg_.gain_reference_accel);
  set_gain(cfg_.cueing.gain);
}

void ControlLoop::set_snapshot_sink(std::function<void(const Snapshot&)> sink, std::uint64_t every_n_ticks) {
  snapshot_sink_ = std::move(sink);
  snapshot_every_ = std::max<std::uint64_t>(1, every_n_ticks);
}

void ControlLoop::set_trial_status(int index, std::string phase) {
  trial_index_ = index;
  trial_phase_ = std::move(phase);
}

Snapshot ControlLoop::snapshot() const {
  Snapshot s;
  s.t = now();
  s.force = last_force_;
  s.head = device_.head();
  s.safety = safety_.kill_switch().state;
  s.gain = cfg_.cueing.gain;
  s.mode = cfg_.cueing.mode;
  s.trial_index = trial_index_;
  s.trial_phase = trial_phase_;
  s.mean_tick_us = timing_.mean_us();
  return s;
}

void ControlLoop::handle(const Command& c) {
  switch (c.type) {
    case Command::Type::safety_event: apply(c.event); break;
    case Command::Type::set_gain: set_gain(c.value); break;
    case Command::Type::set_mode:
      if (command_handler_) {
        command_handler_(c);
      } else {
        set_mode(c.mode);
      }
      break;
    default:
      if (command_handler_) command_handler_(c);
      break;
  }
}

cueing::WrenchCommand ControlLoop::tick(const TickInput& input) {
  const auto started = Clock::now();
  const double t = now();

  for (const auto& c : commands_.drain()) handle(c);
  if (kill_latch_.consume()) apply(safety::KillEvent::kill);

  auto cmd = cueing::cueing_tick(cfg_.cueing, input.sample, device_.head(), safety_, washout_, input.live, t, dt_);

  const auto ack = device_.send(cmd);
  if (!ack.accepted) {
    safety_.fault(ack.reason, t);
    cmd = cueing::WrenchCommand{Vec3::Zero(), {}, t};
  }
  try {
    device_.step(dt_);
  } catch (const HardFault& e) {
    safety_.fault(e.what(), t);
    last_force_ = Vec3::Zero();
    ++ticks_;
    throw;
  }
  last_force_ = cmd.force;
  ++ticks_;

  const double us = std::chrono::duration<double, std::micro>(Clock::now() - started).count();
  timing_.ticks += 1;
  timing_.total_us += us;
  timing_.max_us = std::max(timing_.max_us, us);

  if (snapshot_sink_ && ticks_ % snapshot_every_ == 0) snapshot_sink_(snapshot());
  if (!ack.accepted) throw HardFault(ack.reason);
  return cmd;
}

Pacer::Pacer(double period_s)
    : period_(std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(period_s))),
      next_(Clock::now()) {}

void Pacer::wait_next() {
  constexpr auto spin_margin = std::chrono::microseconds(200);
  if (next_ - Clock::now() > spin_margin) std::this_thread::sleep_until(next_ - spin_margin);
  while (Clock::now() < next_) {
  }
  next_ += period_;
}

bool Pacer::finished_late() const { return Clock::now() > next_; }

std::unique_ptr<InputSource> make_source(const SessionConfig& cfg, const telemetry::LatestSampleMailbox* mailbox) {
  switch (cfg.source) {
    case SourceKind::synthetic_stimulus: return std::make_unique<StimulusSource>(cfg.stimulus);
    case SourceKind::trace_replay: return std::make_unique<TraceSource>(stimulus::load_trace(cfg.trace_path));
    case SourceKind::live_udp:
      if (mailbox == nullptr) throw ConfigError("live UDP source needs a telemetry mailbox");
      return std::make_unique<MailboxSource>(*mailbox, cfg.telemetry.staleness_timeout);
  }
  throw ConfigError("unknown source");
}

bool drive(ControlLoop& loop, InputSource& source, std::uint64_t ticks, Pacing pacing,
           const std::function<void(ControlLoop&)>& before_tick, stimulus::Trace* recorded) {
  std::optional<Pacer> pacer;
  if (pacing == Pacing::realtime) pacer.emplace(loop.dt());
  const double period_us = loop.dt() * 1e6;

  for (std::uint64_t i = 0; i < ticks; ++i) {
    if (pacer) pacer->wait_next();
    if (before_tick) before_tick(loop);
    const auto input = source.sample(loop.now());
    if (recorded) recorded->samples.push_back(input.sample);
    const double before_us = loop.timing().total_us;
    try {
      loop.tick(input);
    } catch (const HardFault&) {
      return false;
    }
    const bool late = pacer ? pacer->finished_late() : (loop.timing().total_us - before_us) > period_us;
    if (late) loop.timing().overruns += 1;
  }
  return true;
}

RunReport run_loop(const SessionConfig& cfg, double duration, const RunOptions& opts) {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("run duration must be positive");
  ControlLoop loop(cfg);
  if (opts.auto_engage) loop.arm_and_engage();

  std::optional<telemetry::LatestSampleMailbox> mailbox;
  std::unique_ptr<telemetry::UdpReceiver> receiver;
  std::unique_ptr<InputSource> owned;
  InputSource* source = opts.source;
  if (source == nullptr) {
    if (cfg.source == SourceKind::live_udp) {
      mailbox.emplace();
      const auto epoch = Clock::now();
      receiver = std::make_unique<telemetry::UdpReceiver>(
          cfg.telemetry.port, cfg.telemetry.channels, *mailbox,
          [epoch] { return std::chrono::duration<double>(Clock::now() - epoch).count(); });
    }
    owned = make_source(cfg, mailbox ? &*mailbox : nullptr);
    source = owned.get();
  }

  const auto ticks = static_cast<std::uint64_t>(std::ceil(duration * cfg.tick_rate - 1e-9));
  loop.device().reserve_log(ticks);

  RunReport report;
  report.recorded_input.sample_rate = cfg.tick_rate;
  report.recorded_input.source = stimulus::TraceSource::recorded;
  if (opts.record_input) report.recorded_input.samples.reserve(ticks);

  const bool ok = drive(loop, *source, ticks, opts.pacing, opts.before_tick,
                        opts.record_input ? &report.recorded_input : nullptr);
  if (receiver) receiver->stop();

  report.hard_fault = !ok;
  report.fault_reason = loop.safety().fault_reason();
  report.ticks = loop.tick_index();
  report.timing = loop.timing();
  if (report.timing.overrun_ratio() > cfg.overrun_warning_ratio) {
    report.warnings.push_back(fmt::format("overrun ratio {:.2f}% above {:.2f}%", 100.0 * report.timing.overrun_ratio(),
                                          100.0 * cfg.overrun_warning_ratio));
  }
  if (report.hard_fault) report.warnings.push_back("hard fault: " + report.fault_reason);
  report.log = loop.device().take_log();
  if (!cfg.log_path.empty()) device::export_log(report.log, cfg.log_path);
  return report;
}

}  // namespace kinhmd::session
