#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "kinhmd/cueing.hpp"
#include "kinhmd/device.hpp"
#include "kinhmd/safety.hpp"
#include "kinhmd/session/config.hpp"
#include "kinhmd/session/control_loop.hpp"
#include "kinhmd/session/summary.hpp"
#include "kinhmd/session/trials.hpp"
#include "kinhmd/stimulus.hpp"
#include "kinhmd/telemetry.hpp"

namespace py = pybind11;
using namespace kinhmd;

namespace {

session::SessionConfig make_config(const py::object& cfg) {
  if (cfg.is_none()) return {};
  if (py::isinstance<py::dict>(cfg)) {
    const auto text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
    return session::config_from_json(nlohmann::json::parse(text));
  }
  return session::load_config(cfg.cast<std::filesystem::path>());
}

py::dict config_dict(const session::SessionConfig& cfg) {
  return py::module_::import("json").attr("loads")(session::config_to_json(cfg).dump());
}

py::array_t<double> rows(std::size_t n, std::size_t cols) {
  return py::array_t<double>({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(cols)});
}

py::dict log_arrays(const device::DeviceLog& log) {
  const auto n = log.records.size();
  py::array_t<double> t(static_cast<py::ssize_t>(n));
  auto force = rows(n, 3), pos = rows(n, 3), quat = rows(n, 4);
  py::array_t<bool> cylinder(static_cast<py::ssize_t>(n));
  auto tt = t.mutable_unchecked<1>();
  auto f = force.mutable_unchecked<2>();
  auto p = pos.mutable_unchecked<2>();
  auto q = quat.mutable_unchecked<2>();
  auto c = cylinder.mutable_unchecked<1>();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = log.records[i];
    const auto k = static_cast<py::ssize_t>(i);
    tt(k) = r.t;
    for (int a = 0; a < 3; ++a) {
      f(k, a) = r.applied_force[a];
      p(k, a) = r.head.position[a];
    }
    const auto& o = r.head.orientation;
    q(k, 0) = o.x();
    q(k, 1) = o.y();
    q(k, 2) = o.z();
    q(k, 3) = o.w();
    c(k) = r.applied_torque == cueing::TorqueKind::cylinder_joint;
  }
  py::dict d;
  d["t"] = t;
  d["force"] = force;
  d["position"] = pos;
  d["quat"] = quat;
  d["cylinder"] = cylinder;
  return d;
}

py::dict record_dict(const session::TrialRecord& r) {
  py::dict d;
  d["trial_index"] = r.trial_index;
  d["condition"] = std::string(session::to_string(r.condition));
  d["cancelled"] = r.cancelled;
  if (r.ratings) {
    d["ratings"] = py::dict(py::arg("relative_motion") = r.ratings->relative_motion,
                            py::arg("acceleration") = r.ratings->acceleration, py::arg("comfort") = r.ratings->comfort);
  } else {
    d["ratings"] = py::none();
  }
  d["lean_peak"] = r.lean_peak;
  d["peak_force"] = r.peak_force;
  d["t_launch"] = r.t_launch;
  d["t_stimulus_start"] = r.t_stimulus_start;
  d["t_stimulus_end"] = r.t_stimulus_end;
  return d;
}

}  // namespace

PYBIND11_MODULE(_kinhmd, m) {
  m.doc() = "Head-based force-feedback motion cueing engine";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<DomainError>(m, "DomainError", error);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<ParseError>(m, "ParseError", error);
  py::register_exception<HardFault>(m, "HardFault", error);
  py::register_exception<telemetry::PacketError>(m, "PacketError", error);

  // stimulus
  py::class_<stimulus::StimulusPattern>(m, "StimulusPattern")
      .def(py::init([](double amplitude, double plateau, double ease) {
             stimulus::StimulusPattern p{amplitude, plateau, ease};
             p.validate();
             return p;
           }),
           py::arg("amplitude") = 5.0, py::arg("plateau") = 4.0, py::arg("ease") = 0.5)
      .def_readwrite("amplitude", &stimulus::StimulusPattern::step_amplitude)
      .def_readwrite("plateau", &stimulus::StimulusPattern::plateau_duration)
      .def_readwrite("ease", &stimulus::StimulusPattern::ease_duration)
      .def_property_readonly("total_duration", &stimulus::StimulusPattern::total_duration)
      .def("__call__", [](const stimulus::StimulusPattern& p, double t) { return stimulus::eval_pattern(p, t); });

  m.def("eval_pattern", &stimulus::eval_pattern, py::arg("pattern"), py::arg("t"));
  m.def(
      "synthesize_trace",
      [](const stimulus::StimulusPattern& p, double rate) {
        const auto tr = stimulus::synthesize_trace(p, rate);
        const auto n = tr.samples.size();
        py::array_t<double> t(static_cast<py::ssize_t>(n));
        auto a = rows(n, 3);
        auto tt = t.mutable_unchecked<1>();
        auto aa = a.mutable_unchecked<2>();
        for (std::size_t i = 0; i < n; ++i) {
          tt(static_cast<py::ssize_t>(i)) = tr.samples[i].timestamp;
          for (int k = 0; k < 3; ++k) aa(static_cast<py::ssize_t>(i), k) = tr.samples[i].accel[k];
        }
        return py::make_tuple(t, a);
      },
      py::arg("pattern") = stimulus::StimulusPattern{}, py::arg("rate") = 1000.0,
      "Returns (t, accel) with accel of shape (n, 3).");
  m.def(
      "write_stimulus",
      [](const std::filesystem::path& path, const stimulus::StimulusPattern& p, double rate) {
        stimulus::save_trace(stimulus::synthesize_trace(p, rate), path);
      },
      py::arg("path"), py::arg("pattern") = stimulus::StimulusPattern{}, py::arg("rate") = 1000.0);

  // cueing
  m.def(
      "render_force",
      [](const Vec3& accel, const std::string& mode, double gain) {
        cueing::CueingConfig cfg;
        const auto md = cueing::mode_from_string(mode);
        if (!md) throw ConfigError("unknown mode '" + mode + "'");
        cfg.mode = *md;
        cfg.gain = gain;
        return cueing::render_force(cfg, {0.0, accel});
      },
      py::arg("accel"), py::arg("mode") = "indirect", py::arg("gain") = 2.0);
  m.def(
      "torque_policy",
      [](const Vec3& force, double deadband) -> py::object {
        const auto t = cueing::torque_policy(force, deadband);
        if (t.kind == cueing::TorqueKind::free) return py::none();
        return py::cast(t.axis);
      },
      py::arg("force"), py::arg("deadband") = 1.0, "None when the head is free, else the cylinder axis.");

  // safety
  m.def("clamp_force", &safety::clamp_force, py::arg("force"), py::arg("limit") = 10.0);
  m.def("limit_jerk", &safety::limit_jerk, py::arg("prev"), py::arg("requested"), py::arg("jerk_limit") = 200.0,
        py::arg("dt") = 1e-3);
  m.def(
      "kill_transition",
      [](const std::string& state, const std::string& event) {
        const auto s = safety::kill_state_from_string(state);
        const auto e = safety::kill_event_from_string(event);
        if (!s || !e) throw DomainError("unknown kill switch state or event");
        return std::string(safety::to_string(safety::kill_transition({*s, 0.0}, *e, 0.0).state));
      },
      py::arg("state"), py::arg("event"));
  m.def(
      "calibrate_gain",
      [](const std::string& user, const std::function<std::optional<bool>(double, double)>& responder,
         double probe_accel, double force_limit) {
        safety::SafetyConfig cfg;
        cfg.force_limit = force_limit;
        const auto r = safety::calibrate_gain(user, responder, cfg, probe_accel);
        py::list steps;
        for (const auto& s : r.steps) steps.append(py::make_tuple(s.gain, s.accepted));
        py::dict d;
        d["user_id"] = r.user_id;
        d["accepted_gain"] = r.accepted_gain;
        d["aborted"] = r.aborted;
        d["steps"] = steps;
        return d;
      },
      py::arg("user_id"), py::arg("responder"), py::arg("probe_accel") = 5.0, py::arg("force_limit") = 10.0,
      "responder(gain, force) returns True, False or None (timeout).");

  // telemetry
  m.def(
      "parse_packet",
      [](const py::bytes& data) {
        const std::string_view view = data;
        const auto pkt = telemetry::parse_packet(
            std::span(reinterpret_cast<const std::uint8_t*>(view.data()), view.size()));
        py::list out;
        for (const auto& r : pkt.records) out.append(py::make_tuple(r.index, std::vector<float>(r.values.begin(), r.values.end())));
        return out;
      },
      py::arg("data"), "List of (index, [eight floats]).");
  m.def(
      "encode_packet",
      [](const std::vector<std::pair<std::uint32_t, std::vector<float>>>& records) {
        telemetry::DataPacket pkt;
        for (const auto& [index, values] : records) {
          if (values.size() != 8) throw DomainError("a DATA record holds exactly eight values");
          telemetry::DataRecord r;
          r.index = index;
          std::copy(values.begin(), values.end(), r.values.begin());
          pkt.records.push_back(r);
        }
        const auto bytes = telemetry::encode_packet(pkt);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("records"));

  // device
  m.def(
      "simulate_force",
      [](const Vec3& force, double duration, const py::object& config) {
        const auto cfg = make_config(config);
        device::SimulatedDevice dev(cfg.plant);
        const auto ticks = static_cast<long>(std::ceil(duration * cfg.tick_rate - 1e-9));
        for (long i = 0; i < ticks; ++i) {
          cueing::WrenchCommand c;
          c.force = force;
          c.timestamp = static_cast<double>(i) * cfg.tick_dt();
          c.torque = cueing::torque_policy(force, cfg.cueing.torque_deadband);
          dev.send(c);
          dev.step(cfg.tick_dt());
        }
        return log_arrays(dev.log());
      },
      py::arg("force"), py::arg("duration"), py::arg("config") = py::none(),
      "Applies a constant force to the simulated plant; returns the device log as arrays.");
  m.def(
      "read_log", [](const std::filesystem::path& path) { return log_arrays(device::import_log(path)); },
      py::arg("path"));

  // session
  m.def(
      "load_config", [](const py::object& cfg) { return config_dict(make_config(cfg)); }, py::arg("config"),
      "Validates a config (dict or path) and returns it with defaults filled in.");
  m.def(
      "run",
      [](const py::object& config, double duration, bool realtime, bool engage) {
        const auto cfg = make_config(config);
        session::RunOptions opts;
        opts.pacing = realtime ? session::Pacing::realtime : session::Pacing::free_run;
        opts.auto_engage = engage;
        session::RunReport report;
        {
          py::gil_scoped_release release;
          report = session::run_loop(cfg, duration, opts);
        }
        auto d = log_arrays(report.log);
        d["ticks"] = report.ticks;
        d["hard_fault"] = report.hard_fault;
        d["mean_tick_us"] = report.timing.mean_us();
        d["max_tick_us"] = report.timing.max_us;
        d["overruns"] = report.timing.overruns;
        d["warnings"] = report.warnings;
        return d;
      },
      py::arg("config") = py::none(), py::arg("duration") = 10.0, py::arg("realtime") = false,
      py::arg("engage") = true, "Runs the control loop; returns the device log as arrays plus timing.");
  m.def(
      "plan_trials",
      [](int reps, std::uint64_t seed, bool full_shuffle) {
        const auto plan = session::plan_trials({session::kAllConditions.begin(), session::kAllConditions.end()}, reps,
                                               seed, full_shuffle ? session::Randomization::full
                                                                  : session::Randomization::block);
        std::vector<std::string> out;
        for (auto c : plan.order) out.emplace_back(session::to_string(c));
        return out;
      },
      py::arg("reps") = 10, py::arg("seed") = 1, py::arg("full_shuffle") = false);
  m.def(
      "run_session",
      [](const py::object& config, int reps, std::uint64_t seed, std::vector<std::pair<int, double>> kills) {
        const auto cfg = make_config(config);
        const auto plan =
            session::plan_trials({session::kAllConditions.begin(), session::kAllConditions.end()}, reps, seed);
        std::vector<session::TrialRecord> records;
        {
          py::gil_scoped_release release;
          session::ControlLoop loop(cfg);
          session::ScriptedResponder responder(seed);
          for (const auto& [trial, at] : kills) responder.kill_during(trial, at);
          records = session::run_session(loop, plan, responder, cfg.stimulus);
        }
        py::list out;
        for (const auto& r : records) out.append(record_dict(r));
        return out;
      },
      py::arg("config") = py::none(), py::arg("reps") = 10, py::arg("seed") = 1,
      py::arg("kills") = std::vector<std::pair<int, double>>{},
      "Scripted session; kills is a list of (trial, seconds into stimulus).");
  m.def(
      "five_number",
      [](std::vector<double> v) {
        const auto f = session::five_number(std::move(v));
        return py::make_tuple(f.min, f.q1, f.median, f.q3, f.max);
      },
      py::arg("values"));
}
