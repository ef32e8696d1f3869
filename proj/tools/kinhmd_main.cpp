// kinhmd: command-line front end for the head-based motion-cueing engine.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "kinhmd/device.hpp"
#include "kinhmd/session/config.hpp"
#include "kinhmd/session/control_loop.hpp"
#include "kinhmd/session/service.hpp"
#include "kinhmd/session/summary.hpp"
#include "kinhmd/session/trials.hpp"
#include "kinhmd/stimulus.hpp"

namespace {

using namespace kinhmd;

volatile std::sig_atomic_t g_stop = 0;

struct Overrides {
  std::string config;
  std::string source;
  std::string mode;
  std::optional<double> gain;
  std::optional<double> limit;
  std::optional<double> jerk_limit;
  std::string trace;
  std::string log;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON session config")->check(CLI::ExistingFile);
  app->add_option("--mode", o.mode, "Rendering mode")->check(CLI::IsMember({"direct", "indirect", "none"}));
  app->add_option("--gain", o.gain, "Gain, N per m/s^2");
  app->add_option("--limit", o.limit, "Force limit, N");
  app->add_option("--jerk-limit", o.jerk_limit, "Force slew limit, N/s");
  app->add_option("--log", o.log, "Device log output (.jsonl, .jsonl.gz)");
}

session::SessionConfig resolve(const Overrides& o) {
  session::SessionConfig cfg = o.config.empty() ? session::SessionConfig{} : session::load_config(o.config);
  if (!o.source.empty()) cfg.source = *session::source_from_string(o.source);
  if (!o.mode.empty()) cfg.cueing.mode = *cueing::mode_from_string(o.mode);
  if (o.gain) cfg.cueing.gain = *o.gain;
  if (o.limit) cfg.safety.force_limit = *o.limit;
  if (o.jerk_limit) cfg.safety.jerk_limit = *o.jerk_limit;
  if (!o.trace.empty()) cfg.trace_path = o.trace;
  if (!o.log.empty()) cfg.log_path = o.log;
  cfg.validate();
  return cfg;
}

void print_timing(const session::TimingStats& t) {
  fmt::print("ticks {}  mean {:.2f} us  max {:.1f} us  overruns {} ({:.3f}%)\n", t.ticks, t.mean_us(), t.max_us,
             t.overruns, 100.0 * t.overrun_ratio());
}

struct LogCheck {
  double peak_force = 0.0;
  double max_slew = 0.0;
  std::size_t over_limit = 0;
  std::size_t non_increasing_t = 0;
};

LogCheck check_log(const device::DeviceLog& log, double limit) {
  LogCheck c;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    c.peak_force = std::max(c.peak_force, r.applied_force.norm());
    if (r.applied_force.norm() > limit) ++c.over_limit;
    if (i > 0) {
      const auto& p = log.records[i - 1];
      if (!(r.t > p.t)) ++c.non_increasing_t;
      const double dt = r.t - p.t;
      if (dt > 0) c.max_slew = std::max(c.max_slew, (r.applied_force - p.applied_force).norm() / dt);
    }
  }
  return c;
}

int cmd_stimulus(const std::string& out, double rate, const stimulus::StimulusPattern& p) {
  const auto trace = stimulus::synthesize_trace(p, rate);
  stimulus::save_trace(trace, out);
  fmt::print("wrote {} samples ({:.3f} s at {} Hz) to {}\n", trace.samples.size(), p.total_duration(), rate, out);
  return 0;
}

int cmd_run(const Overrides& o, double duration, bool realtime, const std::string& record) {
  const auto cfg = resolve(o);
  session::RunOptions opts;
  opts.pacing = realtime || cfg.source == session::SourceKind::live_udp ? session::Pacing::realtime
                                                                         : session::Pacing::free_run;
  opts.record_input = !record.empty();
  if (cfg.source == session::SourceKind::live_udp) {
    fmt::print("listening for DATA packets on UDP {} (record {}, slots {},{},{})\n", cfg.telemetry.port,
               cfg.telemetry.channels.record_index, cfg.telemetry.channels.slots[0],
               cfg.telemetry.channels.slots[1], cfg.telemetry.channels.slots[2]);
  }
  const auto report = session::run_loop(cfg, duration, opts);
  if (!record.empty()) stimulus::save_trace(report.recorded_input, record);

  const auto check = check_log(report.log, cfg.safety.force_limit);
  fmt::print("source {}  mode {}  gain {}\n", session::to_string(cfg.source), cueing::to_string(cfg.cueing.mode),
             cfg.cueing.gain);
  print_timing(report.timing);
  fmt::print("peak |F| {:.4f} N  peak lean {:.2f} mm  records {}\n", check.peak_force,
             report.log.records.empty() ? 0.0 : 1e3 * device::lean_amplitude(report.log), report.log.records.size());
  for (const auto& w : report.warnings) fmt::print(stderr, "warning: {}\n", w);
  if (!cfg.log_path.empty()) fmt::print("log written to {}\n", cfg.log_path.string());
  return report.hard_fault ? 2 : 0;
}

int cmd_trial(const Overrides& o, int reps, std::uint64_t seed, bool full_shuffle, bool realtime,
              const std::string& report_stem, const std::string& records_path) {
  const auto cfg = resolve(o);
  const auto plan = session::plan_trials({session::kAllConditions.begin(), session::kAllConditions.end()}, reps, seed,
                                         full_shuffle ? session::Randomization::full : session::Randomization::block);
  session::ControlLoop loop(cfg);
  session::ScriptedResponder responder(seed);
  const auto records = session::run_session(loop, plan, responder, cfg.stimulus,
                                            realtime ? session::Pacing::realtime : session::Pacing::free_run);

  for (const auto& r : records) {
    fmt::print("trial {:2d}  {:<10}  {}  peak |F| {:6.3f} N  lean {:6.2f} mm\n", r.trial_index,
               session::to_string(r.condition), r.cancelled ? "cancelled" : "rated    ", r.peak_force,
               1e3 * r.lean_peak);
  }
  const auto summary = session::summarize(records);
  fmt::print("\n{}", session::format_summary(summary));
  if (!report_stem.empty()) {
    session::write_report(summary, report_stem);
    fmt::print("report written to {}.txt and {}.csv\n", report_stem, report_stem);
  }
  if (!records_path.empty()) session::write_trial_records(records, records_path);
  if (!cfg.log_path.empty()) device::export_log(loop.device().log(), cfg.log_path);
  return 0;
}

int cmd_replay(const std::string& log_path, const Overrides& o, const std::string& trace) {
  const auto log = device::import_log(log_path);
  const auto cfg = resolve(o);
  const auto check = check_log(log, cfg.safety.force_limit);
  fmt::print("{} records, {:.3f} s\n", log.records.size(),
             log.records.empty() ? 0.0 : log.records.back().t - log.records.front().t);
  fmt::print("peak |F| {:.4f} N (limit {} N, {} over)\n", check.peak_force, cfg.safety.force_limit, check.over_limit);
  fmt::print("max slew {:.2f} N/s (jerk limit {} N/s; kill transitions may exceed it)\n", check.max_slew,
             cfg.safety.jerk_limit);
  if (!log.records.empty()) fmt::print("peak lean {:.2f} mm\n", 1e3 * device::lean_amplitude(log));
  int status = (check.over_limit || check.non_increasing_t) ? 1 : 0;

  if (!trace.empty()) {
    auto replay_cfg = cfg;
    replay_cfg.source = session::SourceKind::trace_replay;
    replay_cfg.trace_path = trace;
    replay_cfg.log_path.clear();
    const double duration = static_cast<double>(log.records.size()) / replay_cfg.tick_rate;
    const auto rerun = session::run_loop(replay_cfg, duration);
    std::size_t mismatches = rerun.log.records.size() == log.records.size() ? 0 : 1;
    for (std::size_t i = 0; i < std::min(rerun.log.records.size(), log.records.size()); ++i) {
      if (rerun.log.records[i].applied_force != log.records[i].applied_force) ++mismatches;
    }
    fmt::print("replay of {}: {} mismatching force records\n", trace, mismatches);
    if (mismatches) status = 1;
  }
  return status;
}

int cmd_serve(const Overrides& o, std::uint16_t port, int reps, std::uint64_t seed) {
  const auto cfg = resolve(o);
  session::ServiceOptions opts;
  opts.port = port;
  opts.reps = reps;
  opts.seed = seed;
  session::SessionService service(cfg, opts);
  service.start();
  fmt::print("console service on ws://127.0.0.1:{}  (Ctrl-C to stop)\n", service.port());
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  const auto records = service.records();
  fmt::print("stopped after {} trial records\n", records.size());
  return 0;
}

int cmd_calibrate(double probe, double limit, const std::string& user) {
  safety::SafetyConfig cfg;
  cfg.force_limit = limit;
  const auto result = safety::calibrate_gain(
      user,
      [](double gain, double force) -> std::optional<bool> {
        fmt::print("probe gain {:.3f} N/(m/s^2) -> {:.2f} N. acceptable? [y/n] ", gain, force);
        std::fflush(stdout);
        std::string answer;
        if (!std::getline(std::cin, answer)) return std::nullopt;
        return !answer.empty() && (answer[0] == 'y' || answer[0] == 'Y');
      },
      cfg, probe);
  fmt::print("{}accepted gain for {}: {:.3f} N/(m/s^2)\n", result.aborted ? "aborted; " : "", result.user_id,
             result.accepted_gain);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Head-based force-feedback motion cueing engine"};
  app.require_subcommand(1);

  std::string stim_out;
  double stim_rate = 1000.0;
  stimulus::StimulusPattern pattern;
  auto* stim = app.add_subcommand("stimulus", "Write the synthetic double-step stimulus as a trace file");
  stim->add_option("--out", stim_out, "Output CSV")->required();
  stim->add_option("--rate", stim_rate, "Sample rate, Hz");
  stim->add_option("--amplitude", pattern.step_amplitude, "Step amplitude, m/s^2");
  stim->add_option("--plateau", pattern.plateau_duration, "Plateau duration, s");
  stim->add_option("--ease", pattern.ease_duration, "Ease duration, s");

  Overrides run_o;
  double duration = 10.0;
  bool realtime = false;
  std::string record;
  auto* run = app.add_subcommand("run", "Run the control loop on the simulated device");
  add_overrides(run, run_o);
  run->add_option("--source", run_o.source, "Input source")->check(CLI::IsMember({"udp", "trace", "stimulus"}));
  run->add_option("--trace", run_o.trace, "Trace file for --source trace");
  run->add_option("--duration", duration, "Seconds to run");
  run->add_option("--record", record, "Record the per-tick input as a trace file");
  run->add_flag("--realtime", realtime, "Pace ticks against the wall clock");

  Overrides trial_o;
  int reps = 10;
  std::uint64_t seed = 1;
  bool full_shuffle = false;
  bool trial_realtime = false;
  std::string report_stem, records_path;
  auto* trial = app.add_subcommand("trial", "Run a scripted block of trials and summarize ratings");
  add_overrides(trial, trial_o);
  trial->add_option("--reps", reps, "Repetitions per condition")->check(CLI::PositiveNumber);
  trial->add_option("--seed", seed, "Randomization seed");
  trial->add_flag("--full-shuffle", full_shuffle, "Shuffle the whole list instead of per block");
  trial->add_flag("--realtime", trial_realtime, "Pace ticks against the wall clock");
  trial->add_option("--report", report_stem, "Write <stem>.txt and <stem>.csv");
  trial->add_option("--records", records_path, "Write per-trial records CSV");

  Overrides replay_o;
  std::string replay_log, replay_trace;
  auto* replay = app.add_subcommand("replay", "Check a device log; optionally re-run a recorded input against it");
  replay->add_option("--log", replay_log, "Device log (.jsonl or .jsonl.gz)")->required()->check(CLI::ExistingFile);
  replay->add_option("--config", replay_o.config, "JSON session config")->check(CLI::ExistingFile);
  replay->add_option("--limit", replay_o.limit, "Force limit, N");
  replay->add_option("--trace", replay_trace, "Recorded input trace to re-run and compare");

  Overrides serve_o;
  std::uint16_t port = 8765;
  int serve_reps = 10;
  std::uint64_t serve_seed = 1;
  auto* serve = app.add_subcommand("serve", "Run the console WebSocket service");
  add_overrides(serve, serve_o);
  serve->add_option("--port", port, "WebSocket port");
  serve->add_option("--reps", serve_reps, "Repetitions per condition")->check(CLI::PositiveNumber);
  serve->add_option("--seed", serve_seed, "Randomization seed");

  double probe = 5.0, cal_limit = 10.0;
  std::string user = "participant";
  auto* cal = app.add_subcommand("calibrate", "Interactive pre-session gain staircase");
  cal->add_option("--probe", probe, "Probe acceleration, m/s^2");
  cal->add_option("--limit", cal_limit, "Force limit, N");
  cal->add_option("--user", user, "Participant id");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*stim) return cmd_stimulus(stim_out, stim_rate, pattern);
    if (*run) return cmd_run(run_o, duration, realtime, record);
    if (*trial) return cmd_trial(trial_o, reps, seed, full_shuffle, trial_realtime, report_stem, records_path);
    if (*replay) return cmd_replay(replay_log, replay_o, replay_trace);
    if (*serve) return cmd_serve(serve_o, port, serve_reps, serve_seed);
    if (*cal) return cmd_calibrate(probe, cal_limit, user);
  } catch (const kinhmd::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
