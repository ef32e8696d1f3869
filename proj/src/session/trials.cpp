#include "kinhmd/session/trials.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

namespace kinhmd::session {

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::H_NONE: return "H_NONE";
    case Condition::H_DIRECT: return "H_DIRECT";
    case Condition::H_INDIRECT: return "H_INDIRECT";
  }
  return "?";
}

std::optional<Condition> condition_from_string(std::string_view s) {
  for (auto c : kAllConditions) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

cueing::Mode mode_for(Condition c) {
  switch (c) {
    case Condition::H_NONE: return cueing::Mode::none;
    case Condition::H_DIRECT: return cueing::Mode::direct;
    case Condition::H_INDIRECT: return cueing::Mode::indirect;
  }
  return cueing::Mode::none;
}

std::string_view to_string(TrialPhase p) {
  switch (p) {
    case TrialPhase::idle: return "idle";
    case TrialPhase::launch_wait: return "launch_wait";
    case TrialPhase::target: return "target";
    case TrialPhase::stimulus: return "stimulus";
    case TrialPhase::rating: return "rating";
    case TrialPhase::done: return "done";
    case TrialPhase::cancelled: return "cancelled";
  }
  return "?";
}

namespace {

// Unbiased index in [0, n) from a 64-bit engine; std::uniform_int_distribution
// is not reproducible across standard libraries.
std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

template <typename It>
void fisher_yates(It first, It last, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) std::iter_swap(first + (i - 1), first + bounded(rng, i));
}

}  // namespace

TrialPlan plan_trials(const std::vector<Condition>& conditions, int reps, std::uint64_t seed,
                      Randomization randomization) {
  if (conditions.empty()) throw ConfigError("trial plan needs at least one condition");
  if (reps < 1) throw ConfigError("trial plan needs reps >= 1");

  TrialPlan plan{conditions, reps, seed, randomization, {}};
  std::mt19937_64 rng(seed);
  plan.order.reserve(conditions.size() * static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto block_start = plan.order.size();
    plan.order.insert(plan.order.end(), conditions.begin(), conditions.end());
    if (randomization == Randomization::block) {
      fisher_yates(plan.order.begin() + static_cast<std::ptrdiff_t>(block_start), plan.order.end(), rng);
    }
  }
  if (randomization == Randomization::full) fisher_yates(plan.order.begin(), plan.order.end(), rng);
  return plan;
}

void validate_ratings(const Ratings& r) {
  const auto v = r.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& scale = kRatingScales[i];
    if (v[i] < scale.min || v[i] > scale.max) {
      throw DomainError(fmt::format("{} rating {} outside [{}, {}]", scale.name, v[i], scale.min, scale.max));
    }
  }
}

TrialSequencer::TrialSequencer(stimulus::StimulusPattern pattern, double tick_rate)
    : pattern_(pattern),
      target_ticks_(static_cast<std::uint64_t>(std::ceil(kTargetPhaseDuration * tick_rate - 1e-9))),
      stimulus_ticks_(static_cast<std::uint64_t>(std::ceil(pattern.total_duration() * tick_rate - 1e-9))) {
  pattern_.validate();
  dt_ = 1.0 / tick_rate;
}

void TrialSequencer::start(int index, Condition condition, double now) {
  if (active()) throw DomainError("a trial is already running");
  record_ = TrialRecord{};
  record_.trial_index = index;
  record_.condition = condition;
  record_.stimulus_duration = pattern_.total_duration();
  record_.t_launch = now;
  phase_ = TrialPhase::target;
  phase_ticks_ = 0;
}

TickInput TrialSequencer::input(double now) const {
  TickInput in;
  in.sample.timestamp = now;
  if (phase_ == TrialPhase::stimulus) {
    const double t = std::clamp(now - record_.t_stimulus_start, 0.0, pattern_.total_duration());
    in.sample.accel = Vec3(stimulus::eval_pattern(pattern_, t), 0.0, 0.0);
  }
  return in;
}

cueing::Mode TrialSequencer::mode() const {
  return phase_ == TrialPhase::stimulus ? mode_for(record_.condition) : cueing::Mode::none;
}

double TrialSequencer::phase_time(double now) const {
  return phase_ == TrialPhase::stimulus ? now - record_.t_stimulus_start : now - record_.t_launch;
}

void TrialSequencer::observe(double now, const HeadState& head, const Vec3& force, safety::KillState safety) {
  if (!active()) return;
  if (safety == safety::KillState::KILLED) {
    record_.cancelled = true;
    record_.t_stimulus_end = now;
    phase_ = TrialPhase::cancelled;
    return;
  }
  ++phase_ticks_;
  if (phase_ == TrialPhase::target) {
    if (phase_ticks_ >= target_ticks_) {
      phase_ = TrialPhase::stimulus;
      phase_ticks_ = 0;
      record_.t_stimulus_start = now + dt_;
    }
    return;
  }
  record_.lean_peak = std::max(record_.lean_peak, head.position.norm());
  record_.peak_force = std::max(record_.peak_force, force.norm());
  if (phase_ticks_ >= stimulus_ticks_) {
    record_.t_stimulus_end = now;
    phase_ = TrialPhase::rating;
  }
}

TrialRecord TrialSequencer::rate(const Ratings& r) {
  if (phase_ != TrialPhase::rating) throw DomainError("no trial is waiting for ratings");
  validate_ratings(r);
  record_.ratings = r;
  phase_ = TrialPhase::done;
  return record_;
}

ScriptedResponder::ScriptedResponder(std::uint64_t seed) : state_(seed) {}

bool ScriptedResponder::confirm_launch(int /*trial_index*/, ControlLoop& loop) {
  using safety::KillEvent;
  using safety::KillState;
  if (loop.safety().kill_switch().state == KillState::KILLED) loop.apply(KillEvent::rearm);
  if (loop.safety().kill_switch().state == KillState::DISARMED) loop.apply(KillEvent::arm);
  if (loop.safety().kill_switch().state == KillState::ARMED) loop.apply(KillEvent::engage);
  return true;
}

std::optional<Ratings> ScriptedResponder::rate(const TrialRecord& record) {
  // splitmix64 step; ratings lean with the condition so summaries differ.
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  const int jitter = static_cast<int>(z % 3) - 1;
  const int base = record.condition == Condition::H_NONE ? -1 : 1;
  Ratings r;
  r.relative_motion = std::clamp(base + jitter, -3, 3);
  r.acceleration = std::clamp(2 + base + jitter, 0, 5);
  r.comfort = std::clamp(1 + jitter, -3, 3);
  return r;
}

void ScriptedResponder::on_tick(int trial_index, TrialPhase phase, double t_in_phase, ControlLoop& loop) {
  if (phase != TrialPhase::stimulus) return;
  for (auto it = kills_.begin(); it != kills_.end(); ++it) {
    if (it->trial == trial_index && t_in_phase >= it->at) {
      loop.kill_latch().trigger();
      kills_.erase(it);
      return;
    }
  }
}

TrialRecord run_trial(ControlLoop& loop, const TrialPlan& plan, int index, Responder& responder,
                      const stimulus::StimulusPattern& pattern, Pacing pacing) {
  if (index < 0 || static_cast<std::size_t>(index) >= plan.order.size()) {
    throw DomainError(fmt::format("trial index {} outside plan of {}", index, plan.order.size()));
  }
  const Condition condition = plan.order[static_cast<std::size_t>(index)];
  TrialSequencer seq(pattern, loop.config().tick_rate);

  loop.set_trial_status(index, std::string(to_string(TrialPhase::launch_wait)));
  if (!responder.confirm_launch(index, loop)) {
    TrialRecord declined;
    declined.trial_index = index;
    declined.condition = condition;
    declined.cancelled = true;
    return declined;
  }
  if (loop.safety().kill_switch().state != safety::KillState::ENGAGED) {
    throw DomainError("trial launch needs the kill switch ENGAGED");
  }

  const auto saved_mode = loop.cueing_config().mode;
  seq.start(index, condition, loop.now());
  std::optional<Pacer> pacer;
  if (pacing == Pacing::realtime) pacer.emplace(loop.dt());

  while (seq.active()) {
    if (pacer) pacer->wait_next();
    const double now = loop.now();
    responder.on_tick(index, seq.phase(), seq.phase_time(now), loop);
    loop.set_mode(seq.mode());
    loop.set_trial_status(index, std::string(to_string(seq.phase())));
    cueing::WrenchCommand cmd;
    try {
      cmd = loop.tick(seq.input(now));
    } catch (const HardFault&) {
      cmd = cueing::WrenchCommand{};
    }
    if (pacer && pacer->finished_late()) loop.timing().overruns += 1;
    seq.observe(now, loop.device().head(), cmd.force, loop.safety().kill_switch().state);
  }
  loop.set_mode(saved_mode);
  loop.set_trial_status(index, std::string(to_string(seq.phase())));

  if (seq.phase() != TrialPhase::rating) return seq.record();
  if (auto r = responder.rate(seq.record())) return seq.rate(*r);
  return seq.record();
}

std::vector<TrialRecord> run_session(ControlLoop& loop, const TrialPlan& plan, Responder& responder,
                                     const stimulus::StimulusPattern& pattern, Pacing pacing) {
  std::vector<TrialRecord> records;
  records.reserve(plan.order.size());
  for (std::size_t i = 0; i < plan.order.size(); ++i) {
    records.push_back(run_trial(loop, plan, static_cast<int>(i), responder, pattern, pacing));
  }
  loop.set_trial_status(-1, "idle");
  return records;
}

}  // namespace kinhmd::session
