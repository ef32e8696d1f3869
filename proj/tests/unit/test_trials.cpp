#include <algorithm>
#include <set>

#include "kinhmd/session/trials.hpp"
#include "test_util.hpp"

using namespace kinhmd;
using namespace kinhmd::session;

namespace {
std::vector<Condition> all() { return {kAllConditions.begin(), kAllConditions.end()}; }

bool block_property(const TrialPlan& plan) {
  const std::size_t k = plan.conditions.size();
  for (std::size_t b = 0; b + k <= plan.order.size(); b += k) {
    std::set<Condition> seen(plan.order.begin() + b, plan.order.begin() + b + k);
    if (seen.size() != k) return false;
  }
  return plan.order.size() % k == 0;
}

class DecliningResponder : public ScriptedResponder {
 public:
  bool confirm_launch(int, ControlLoop&) override { return false; }
};

class NoEngageResponder : public ScriptedResponder {
 public:
  bool confirm_launch(int, ControlLoop&) override { return true; }
};
}  // namespace

TEST_SUITE("trials") {

TEST_CASE("plan counts and block structure") {
  const auto plan = plan_trials(all(), 10, 42);
  REQUIRE(plan.order.size() == 30);
  for (auto c : kAllConditions) CHECK(std::count(plan.order.begin(), plan.order.end(), c) == 10);
  CHECK(block_property(plan));

  const auto one = plan_trials(all(), 1, 9);
  auto sorted = one.order;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == all());

  const auto full = plan_trials(all(), 10, 42, Randomization::full);
  for (auto c : kAllConditions) CHECK(std::count(full.order.begin(), full.order.end(), c) == 10);
}

TEST_CASE("plan determinism and seed sensitivity") {
  CHECK(plan_trials(all(), 10, 7).order == plan_trials(all(), 10, 7).order);
  std::set<std::vector<Condition>> distinct;
  for (std::uint64_t s = 0; s < 100; ++s) distinct.insert(plan_trials(all(), 10, s).order);
  // 6^10 block orders; a collision among 100 seeds is vanishingly unlikely.
  CHECK(distinct.size() == 100);
}

TEST_CASE("plan errors") {
  CHECK_THROWS_AS(plan_trials({}, 10, 1), ConfigError);
  CHECK_THROWS_AS(plan_trials(all(), 0, 1), ConfigError);
}

TEST_CASE("condition names and modes") {
  for (auto c : kAllConditions) CHECK(condition_from_string(to_string(c)) == c);
  CHECK(mode_for(Condition::H_NONE) == cueing::Mode::none);
  CHECK(mode_for(Condition::H_DIRECT) == cueing::Mode::direct);
  CHECK(mode_for(Condition::H_INDIRECT) == cueing::Mode::indirect);
}

TEST_CASE("rating scales") {
  CHECK_NOTHROW(validate_ratings({-3, 0, 3}));
  CHECK_NOTHROW(validate_ratings({3, 5, -3}));
  CHECK_THROWS_AS(validate_ratings({4, 0, 0}), DomainError);
  CHECK_THROWS_AS(validate_ratings({0, -1, 0}), DomainError);
  CHECK_THROWS_AS(validate_ratings({0, 6, 0}), DomainError);
  CHECK_THROWS_AS(validate_ratings({0, 0, -4}), DomainError);
}

TEST_CASE("sequencer phases") {
  TrialSequencer seq(stimulus::StimulusPattern{}, 1000.0);
  CHECK(seq.target_ticks() == 1500);
  CHECK(seq.stimulus_ticks() == 10000);
  seq.start(0, Condition::H_INDIRECT, 0.0);
  CHECK_THROWS_AS(seq.start(1, Condition::H_NONE, 0.0), DomainError);
  CHECK(seq.mode() == cueing::Mode::none);
  std::uint64_t tick = 0;
  while (seq.phase() == TrialPhase::target) seq.observe(1e-3 * tick++, {}, Vec3::Zero(), safety::KillState::ENGAGED);
  CHECK(tick == 1500);
  CHECK(seq.mode() == cueing::Mode::indirect);
  CHECK(seq.input(seq.record().t_stimulus_start + 2.0).sample.accel.x() == doctest::Approx(5.0));
  while (seq.active()) seq.observe(1e-3 * tick++, {}, Vec3::Zero(), safety::KillState::ENGAGED);
  CHECK(tick == 11500);
  CHECK(seq.phase() == TrialPhase::rating);
  CHECK_THROWS_AS(seq.rate({9, 0, 0}), DomainError);
  const auto rec = seq.rate({1, 2, 3});
  CHECK(rec.ratings->acceleration == 2);
  CHECK(seq.phase() == TrialPhase::done);
  CHECK_THROWS_AS(seq.rate({1, 2, 3}), DomainError);
}

TEST_CASE("H_NONE trial has zero lean") {
  ControlLoop loop(SessionConfig{});
  TrialPlan plan{all(), 1, 0, Randomization::block, {Condition::H_NONE}};
  ScriptedResponder responder;
  const auto rec = run_trial(loop, plan, 0, responder, {});
  CHECK(rec.condition == Condition::H_NONE);
  CHECK(rec.lean_peak == 0.0);
  CHECK(rec.peak_force == 0.0);
  CHECK(rec.ratings);
  CHECK_FALSE(rec.cancelled);
}

TEST_CASE("indirect trial reaches the force limit") {
  ControlLoop loop(SessionConfig{});
  TrialPlan plan{all(), 1, 0, Randomization::block, {Condition::H_INDIRECT}};
  ScriptedResponder responder;
  const auto rec = run_trial(loop, plan, 0, responder, {});
  CHECK(rec.peak_force == doctest::Approx(10.0));
  CHECK(rec.lean_peak == doctest::Approx(10.0 / 300.0).epsilon(0.01));
  CHECK(rec.t_stimulus_start == doctest::Approx(1.5));
  CHECK(rec.t_stimulus_end - rec.t_stimulus_start == doctest::Approx(10.0 - 1e-3));
}

TEST_CASE("kill mid-stimulus cancels the trial") {
  ControlLoop loop(SessionConfig{});
  TrialPlan plan{all(), 1, 0, Randomization::block, {Condition::H_INDIRECT}};
  ScriptedResponder responder;
  responder.kill_during(0, 3.0);
  const auto rec = run_trial(loop, plan, 0, responder, {});
  CHECK(rec.cancelled);
  CHECK_FALSE(rec.ratings);
  const auto& log = loop.device().log().records;
  const auto it = std::find_if(log.begin(), log.end(), [&](const auto& r) { return r.t >= rec.t_stimulus_start + 3.0; });
  REQUIRE(it != log.end());
  CHECK(std::prev(it)->applied_force.norm() > 9.0);
  CHECK(it->applied_force.isZero());
  CHECK(loop.safety().kill_switch().state == safety::KillState::KILLED);
}

TEST_CASE("launch needs ENGAGED") {
  ControlLoop loop(SessionConfig{});
  TrialPlan plan{all(), 1, 0, Randomization::block, {Condition::H_DIRECT}};
  NoEngageResponder lazy;
  CHECK_THROWS_AS(run_trial(loop, plan, 0, lazy, {}), DomainError);
  DecliningResponder no;
  CHECK(run_trial(loop, plan, 0, no, {}).cancelled);
  ScriptedResponder ok;
  CHECK_THROWS_AS(run_trial(loop, plan, 3, ok, {}), DomainError);
}

TEST_CASE("full scripted session") {
  SessionConfig cfg;
  ControlLoop loop(cfg);
  const auto plan = plan_trials(all(), 10, 11);
  ScriptedResponder responder(11);
  responder.kill_during(4, 2.0);
  const auto records = run_session(loop, plan, responder, cfg.stimulus);
  REQUIRE(records.size() == 30);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].trial_index == static_cast<int>(i));
    CHECK(records[i].condition == plan.order[i]);
    if (records[i].condition == Condition::H_NONE) CHECK(records[i].peak_force == 0.0);
  }
  CHECK(records[4].cancelled);
  CHECK(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.ratings.has_value(); }) == 29);
  CHECK(block_property(plan));
  CHECK(loop.cueing_config().mode == cfg.cueing.mode);
}

}
