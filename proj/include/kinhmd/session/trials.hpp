#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kinhmd/cueing.hpp"
#include "kinhmd/session/control_loop.hpp"
#include "kinhmd/stimulus.hpp"

namespace kinhmd::session {

enum class Condition { H_NONE, H_DIRECT, H_INDIRECT };

std::string_view to_string(Condition c);
std::optional<Condition> condition_from_string(std::string_view s);
cueing::Mode mode_for(Condition c);

inline constexpr std::array<Condition, 3> kAllConditions{Condition::H_NONE, Condition::H_DIRECT,
                                                         Condition::H_INDIRECT};

enum class Randomization {
  block,  // every consecutive |conditions| trials hold each condition once
  full,   // one shuffle over the whole list
};

struct TrialPlan {
  std::vector<Condition> conditions;
  int reps_per_condition = 10;
  std::uint64_t seed = 0;
  Randomization randomization = Randomization::block;
  std::vector<Condition> order;
};

/// Deterministic in `seed`. Throws ConfigError for an empty condition list
/// or reps < 1.
TrialPlan plan_trials(const std::vector<Condition>& conditions, int reps, std::uint64_t seed,
                      Randomization randomization = Randomization::block);

/// Integer rating scale. Relative motion: negative = the environment moves,
/// positive = the participant moves.
struct RatingScale {
  std::string_view name;
  int min = 0;
  int max = 0;
};

inline constexpr std::array<RatingScale, 3> kRatingScales{
    RatingScale{"relative_motion", -3, 3},
    RatingScale{"acceleration", 0, 5},
    RatingScale{"comfort", -3, 3},
};

struct Ratings {
  int relative_motion = 0;
  int acceleration = 0;
  int comfort = 0;

  std::array<int, 3> values() const { return {relative_motion, acceleration, comfort}; }
  static Ratings from(const std::array<int, 3>& v) { return {v[0], v[1], v[2]}; }
};

/// Throws DomainError if a rating lies outside its scale.
void validate_ratings(const Ratings& r);

inline constexpr double kTargetPhaseDuration = 1.5;  // s
inline constexpr double kStimulusDuration = 10.0;    // s

enum class TrialPhase { idle, launch_wait, target, stimulus, rating, done, cancelled };
std::string_view to_string(TrialPhase p);

struct TrialRecord {
  int trial_index = 0;
  Condition condition = Condition::H_NONE;
  double target_phase_duration = kTargetPhaseDuration;
  double stimulus_duration = kStimulusDuration;
  std::optional<Ratings> ratings;
  double lean_peak = 0.0;  // m
  bool cancelled = false;
  double t_launch = 0.0;
  double t_stimulus_start = 0.0;
  double t_stimulus_end = 0.0;
  double peak_force = 0.0;  // N, over the stimulus window
};

/// Tick-driven trial state machine shared by the headless runner and the
/// console service. It owns what the loop should see on each tick and
/// moves through target -> stimulus -> rating.
class TrialSequencer {
 public:
  TrialSequencer(stimulus::StimulusPattern pattern, double tick_rate);

  /// Starts trial `index` at time `now`. Throws DomainError if a trial is
  /// already running.
  void start(int index, Condition condition, double now);
  bool active() const { return phase_ == TrialPhase::target || phase_ == TrialPhase::stimulus; }
  TrialPhase phase() const { return phase_; }
  const TrialRecord& record() const { return record_; }

  /// Input and cueing mode for the tick at `now`.
  TickInput input(double now) const;
  cueing::Mode mode() const;
  /// Seconds since the current phase began (stimulus) or since launch.
  double phase_time(double now) const;

  /// Observes the finished tick. A KILLED safety state during the stimulus
  /// cancels the trial.
  void observe(double now, const HeadState& head, const Vec3& force, safety::KillState safety);

  /// Accepts ratings in the rating phase; returns the finished record.
  TrialRecord rate(const Ratings& r);
  /// Drops back to idle after a finished or cancelled trial.
  void reset() { phase_ = TrialPhase::idle; }

  std::uint64_t target_ticks() const { return target_ticks_; }
  std::uint64_t stimulus_ticks() const { return stimulus_ticks_; }

 private:
  stimulus::StimulusPattern pattern_;
  std::uint64_t target_ticks_;
  std::uint64_t stimulus_ticks_;
  double dt_ = 0.0;
  std::uint64_t phase_ticks_ = 0;
  TrialPhase phase_ = TrialPhase::idle;
  TrialRecord record_;
};

/// Participant/operator side of a trial. Scripted in tests and the CLI.
class Responder {
 public:
  virtual ~Responder() = default;
  /// Launch validation. May also operate the safety switch (rearm/engage).
  virtual bool confirm_launch(int trial_index, ControlLoop& loop) = 0;
  /// Ratings for a completed stimulus; nothing skips rating.
  virtual std::optional<Ratings> rate(const TrialRecord& record) = 0;
  /// Called before every tick of a running trial.
  virtual void on_tick(int /*trial_index*/, TrialPhase, double /*t_in_phase*/, ControlLoop&) {}
};

/// Always launches, re-engaging the switch when needed, rates with a fixed
/// function of the condition, and optionally kills at a given time into the
/// stimulus of selected trials.
class ScriptedResponder : public Responder {
 public:
  explicit ScriptedResponder(std::uint64_t seed = 1);

  bool confirm_launch(int trial_index, ControlLoop& loop) override;
  std::optional<Ratings> rate(const TrialRecord& record) override;
  void on_tick(int trial_index, TrialPhase phase, double t_in_phase, ControlLoop& loop) override;

  void kill_during(int trial_index, double t_into_stimulus) { kills_.push_back({trial_index, t_into_stimulus}); }

 private:
  struct Kill {
    int trial;
    double at;
  };
  std::uint64_t state_;
  std::vector<Kill> kills_;
};

/// Runs one trial headless: launch, 1.5 s target, 10 s stimulus, ratings.
/// The kill switch must be ENGAGED after launch validation (DomainError
/// otherwise). A kill during the stimulus cancels the trial unrated.
TrialRecord run_trial(ControlLoop& loop, const TrialPlan& plan, int index, Responder& responder,
                      const stimulus::StimulusPattern& pattern, Pacing pacing = Pacing::free_run);

std::vector<TrialRecord> run_session(ControlLoop& loop, const TrialPlan& plan, Responder& responder,
                                     const stimulus::StimulusPattern& pattern, Pacing pacing = Pacing::free_run);

}  // namespace kinhmd::session
