#include "kinhmd/session/config.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace kinhmd::session {

using nlohmann::json;

std::string_view to_string(SourceKind s) {
  switch (s) {
    case SourceKind::live_udp: return "udp";
    case SourceKind::trace_replay: return "trace";
    case SourceKind::synthetic_stimulus: return "stimulus";
  }
  return "?";
}

std::optional<SourceKind> source_from_string(std::string_view s) {
  for (auto k : {SourceKind::live_udp, SourceKind::trace_replay, SourceKind::synthetic_stimulus}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

void SessionConfig::validate() const {
  if (!(tick_rate >= 250.0) || !std::isfinite(tick_rate)) {
    throw ConfigError(fmt::format("tick rate {} Hz below 250 Hz", tick_rate));
  }
  safety.validate();
  cueing.validate(safety.force_limit);
  plant.validate();
  telemetry.channels.validate();
  stimulus.validate();
  if (!(telemetry.staleness_timeout > 0.0)) throw ConfigError("staleness timeout must be positive");
  if (!(gain_reference_accel > 0.0)) throw ConfigError("gain reference acceleration must be positive");
  if (source == SourceKind::trace_replay && trace_path.empty()) {
    throw ConfigError("trace replay needs a trace path");
  }
}

namespace {

// Reads `obj[key]` into `out` if present and marks the key as consumed.
template <typename T>
void read(const json& obj, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

void read_vec(const json& obj, const char* key, Vec3& out, std::set<std::string>& seen) {
  std::array<double, 3> v{out.x(), out.y(), out.z()};
  read(obj, key, v, seen);
  out = Vec3(v[0], v[1], v[2]);
}

void reject_unknown(const json& obj, const std::set<std::string>& seen, const std::string& section) {
  for (const auto& [k, _] : obj.items()) {
    if (!seen.count(k)) throw ConfigError(fmt::format("unknown config key '{}{}'", section, k));
  }
}

const json& section(const json& j, const char* name, std::set<std::string>& seen) {
  static const json empty = json::object();
  seen.insert(name);
  if (!j.contains(name)) return empty;
  if (!j.at(name).is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", name));
  return j.at(name);
}

}  // namespace

SessionConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  SessionConfig cfg;
  std::set<std::string> top;

  read(j, "tick_rate", cfg.tick_rate, top);
  std::string source = std::string(to_string(cfg.source));
  read(j, "source", source, top);
  auto src = source_from_string(source);
  if (!src) throw ConfigError("unknown source '" + source + "' (udp|trace|stimulus)");
  cfg.source = *src;
  std::string trace_path, log_path;
  read(j, "trace_path", trace_path, top);
  read(j, "log_path", log_path, top);
  cfg.trace_path = trace_path;
  cfg.log_path = log_path;
  read(j, "gain_reference_accel", cfg.gain_reference_accel, top);
  read(j, "overrun_warning_ratio", cfg.overrun_warning_ratio, top);

  {
    std::set<std::string> seen;
    const auto& c = section(j, "cueing", top);
    std::string mode = std::string(cueing::to_string(cfg.cueing.mode));
    read(c, "mode", mode, seen);
    auto m = cueing::mode_from_string(mode);
    if (!m) throw ConfigError("unknown cueing mode '" + mode + "'");
    cfg.cueing.mode = *m;
    read(c, "gain", cfg.cueing.gain, seen);
    read(c, "torque_deadband_n", cfg.cueing.torque_deadband, seen);
    std::set<std::string> wseen;
    const auto& w = section(c, "washout", seen);
    read(w, "enabled", cfg.cueing.washout_enabled, wseen);
    read(w, "recenter_stiffness", cfg.cueing.washout.recenter_stiffness, wseen);
    read(w, "recenter_force_cap_n", cfg.cueing.washout.recenter_force_cap, wseen);
    read(w, "activation_delay_s", cfg.cueing.washout.activation_delay, wseen);
    read(w, "idle_accel_threshold", cfg.cueing.washout.idle_accel_threshold, wseen);
    read_vec(w, "workspace_center", cfg.cueing.washout.workspace_center, wseen);
    reject_unknown(w, wseen, "cueing.washout.");
    reject_unknown(c, seen, "cueing.");
  }
  {
    std::set<std::string> seen;
    const auto& s = section(j, "safety", top);
    read(s, "force_limit_n", cfg.safety.force_limit, seen);
    read(s, "jerk_limit_n_per_s", cfg.safety.jerk_limit, seen);
    read(s, "fade_s", cfg.safety.fade_duration, seen);
    reject_unknown(s, seen, "safety.");
  }
  {
    std::set<std::string> seen;
    const auto& p = section(j, "plant", top);
    read(p, "head_mass", cfg.plant.head_mass, seen);
    read(p, "neck_stiffness", cfg.plant.neck_stiffness, seen);
    const bool damping_given = p.contains("neck_damping");
    read(p, "neck_damping", cfg.plant.neck_damping, seen);
    if (!damping_given) cfg.plant.neck_damping = device::critical_damping(cfg.plant.neck_stiffness, cfg.plant.head_mass);
    read(p, "head_inertia", cfg.plant.head_inertia, seen);
    read(p, "rot_stiffness", cfg.plant.rot_stiffness, seen);
    read(p, "rot_damping", cfg.plant.rot_damping, seen);
    read(p, "passive_rot_stiffness", cfg.plant.passive_rot_stiffness, seen);
    read(p, "passive_rot_damping", cfg.plant.passive_rot_damping, seen);
    read_vec(p, "attachment_offset", cfg.plant.attachment_offset, seen);
    read_vec(p, "workspace_halfextents", cfg.plant.workspace_halfextents, seen);
    read(p, "integrator_dt", cfg.plant.integrator_dt, seen);
    reject_unknown(p, seen, "plant.");
  }
  {
    std::set<std::string> seen;
    const auto& t = section(j, "telemetry", top);
    read(t, "port", cfg.telemetry.port, seen);
    read(t, "record_index", cfg.telemetry.channels.record_index, seen);
    read(t, "slots", cfg.telemetry.channels.slots, seen);
    read(t, "scale", cfg.telemetry.channels.scale, seen);
    read(t, "staleness_timeout_s", cfg.telemetry.staleness_timeout, seen);
    reject_unknown(t, seen, "telemetry.");
  }
  {
    std::set<std::string> seen;
    const auto& s = section(j, "stimulus", top);
    read(s, "amplitude", cfg.stimulus.step_amplitude, seen);
    read(s, "plateau_s", cfg.stimulus.plateau_duration, seen);
    read(s, "ease_s", cfg.stimulus.ease_duration, seen);
    reject_unknown(s, seen, "stimulus.");
  }
  reject_unknown(j, top, "");
  cfg.validate();
  return cfg;
}

json config_to_json(const SessionConfig& cfg) {
  const auto vec = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  const auto& w = cfg.cueing.washout;
  return json{
      {"tick_rate", cfg.tick_rate},
      {"source", to_string(cfg.source)},
      {"trace_path", cfg.trace_path.string()},
      {"log_path", cfg.log_path.string()},
      {"gain_reference_accel", cfg.gain_reference_accel},
      {"overrun_warning_ratio", cfg.overrun_warning_ratio},
      {"cueing",
       {{"mode", cueing::to_string(cfg.cueing.mode)},
        {"gain", cfg.cueing.gain},
        {"torque_deadband_n", cfg.cueing.torque_deadband},
        {"washout",
         {{"enabled", cfg.cueing.washout_enabled},
          {"recenter_stiffness", w.recenter_stiffness},
          {"recenter_force_cap_n", w.recenter_force_cap},
          {"activation_delay_s", w.activation_delay},
          {"idle_accel_threshold", w.idle_accel_threshold},
          {"workspace_center", vec(w.workspace_center)}}}}},
      {"safety",
       {{"force_limit_n", cfg.safety.force_limit},
        {"jerk_limit_n_per_s", cfg.safety.jerk_limit},
        {"fade_s", cfg.safety.fade_duration}}},
      {"plant",
       {{"head_mass", cfg.plant.head_mass},
        {"neck_stiffness", cfg.plant.neck_stiffness},
        {"neck_damping", cfg.plant.neck_damping},
        {"head_inertia", cfg.plant.head_inertia},
        {"rot_stiffness", cfg.plant.rot_stiffness},
        {"rot_damping", cfg.plant.rot_damping},
        {"passive_rot_stiffness", cfg.plant.passive_rot_stiffness},
        {"passive_rot_damping", cfg.plant.passive_rot_damping},
        {"attachment_offset", vec(cfg.plant.attachment_offset)},
        {"workspace_halfextents", vec(cfg.plant.workspace_halfextents)},
        {"integrator_dt", cfg.plant.integrator_dt}}},
      {"telemetry",
       {{"port", cfg.telemetry.port},
        {"record_index", cfg.telemetry.channels.record_index},
        {"slots", cfg.telemetry.channels.slots},
        {"scale", cfg.telemetry.channels.scale},
        {"staleness_timeout_s", cfg.telemetry.staleness_timeout}}},
      {"stimulus",
       {{"amplitude", cfg.stimulus.step_amplitude},
        {"plateau_s", cfg.stimulus.plateau_duration},
        {"ease_s", cfg.stimulus.ease_duration}}},
  };
}

SessionConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config {}: {}", path.string(), e.what()));
  }
  auto cfg = config_from_json(j);
  // Relative paths inside the config are relative to the config file.
  const auto base = path.parent_path();
  if (!cfg.trace_path.empty() && cfg.trace_path.is_relative()) cfg.trace_path = base / cfg.trace_path;
  if (!cfg.log_path.empty() && cfg.log_path.is_relative()) cfg.log_path = base / cfg.log_path;
  return cfg;
}

}  // namespace kinhmd::session
