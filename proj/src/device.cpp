#include "kinhmd/device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <zlib.h>

namespace kinhmd::device {

using cueing::TorqueKind;
using cueing::WrenchCommand;

void PlantConfig::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(head_mass) || !positive(neck_stiffness) || !positive(neck_damping) || !positive(head_inertia) ||
      !positive(rot_stiffness) || !positive(rot_damping) || !positive(passive_rot_stiffness) ||
      !positive(passive_rot_damping)) {
    throw ConfigError("plant masses, stiffnesses and dampings must be positive");
  }
  for (int i = 0; i < 3; ++i) {
    if (!positive(workspace_halfextents[i])) throw ConfigError("workspace half-extents must be positive");
  }
  if (!attachment_offset.allFinite()) throw ConfigError("attachment offset must be finite");
  if (!positive(integrator_dt) || integrator_dt > 0.001 + 1e-15) {
    throw ConfigError(fmt::format("integrator dt {} s must be in (0, 1 ms]", integrator_dt));
  }
}

Vec3 rotation_vector(const Quat& q) {
  Quat n = q.normalized();
  if (n.w() < 0.0) n.coeffs() = -n.coeffs();
  const Vec3 v = n.vec();
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  return (2.0 * std::atan2(s, n.w()) / s) * v;
}

Quat from_rotation_vector(const Vec3& e) {
  const double angle = e.norm();
  if (angle < 1e-300) return Quat::Identity();
  return Quat(Eigen::AngleAxisd(angle, e / angle));
}

namespace {

struct Substate {
  Vec3 x, v, e, w;
};

void integrate(const PlantConfig& cfg, Substate& s, const WrenchCommand& cmd, double h) {
  const Vec3 accel = (cmd.force - cfg.neck_stiffness * s.x - cfg.neck_damping * s.v) / cfg.head_mass;
  s.v += h * accel;
  s.x += h * s.v;
  for (int i = 0; i < 3; ++i) {
    const double lim = cfg.workspace_halfextents[i];
    if (s.x[i] > lim || s.x[i] < -lim) {
      s.x[i] = std::clamp(s.x[i], -lim, lim);
      s.v[i] = 0.0;
    }
  }

  Vec3 torque = cfg.attachment_offset.cross(cmd.force) - cfg.passive_rot_stiffness * s.e -
                cfg.passive_rot_damping * s.w;
  if (cmd.torque.kind == TorqueKind::cylinder_joint) {
    const Vec3& u = cmd.torque.axis;
    const Eigen::Matrix3d held = Eigen::Matrix3d::Identity() - u * u.transpose();
    torque -= held * (cfg.rot_stiffness * s.e + cfg.rot_damping * s.w);
  }
  s.w += h * torque / cfg.head_inertia;
  s.e += h * s.w;
}

}  // namespace

HeadState plant_step(const PlantConfig& cfg, const HeadState& s, const WrenchCommand& cmd, double dt) {
  if (!(dt > 0.0)) throw DomainError("plant step needs dt > 0");
  Substate sub{s.position, s.velocity, rotation_vector(s.orientation), s.angular_velocity};

  const auto n = static_cast<long>(std::ceil(dt / cfg.integrator_dt - 1e-9));
  double remaining = dt;
  for (long i = 0; i < n; ++i) {
    const double h = (i + 1 == n) ? remaining : cfg.integrator_dt;
    integrate(cfg, sub, cmd, h);
    remaining -= h;
  }

  if (!sub.x.allFinite() || !sub.v.allFinite() || !sub.e.allFinite() || !sub.w.allFinite()) {
    throw HardFault("plant state became non-finite");
  }
  HeadState out;
  out.position = sub.x;
  out.velocity = sub.v;
  out.orientation = from_rotation_vector(sub.e);
  out.angular_velocity = sub.w;
  return out;
}

double mechanical_energy(const PlantConfig& cfg, const HeadState& s) {
  const Vec3 e = rotation_vector(s.orientation);
  return 0.5 * cfg.head_mass * s.velocity.squaredNorm() + 0.5 * cfg.neck_stiffness * s.position.squaredNorm() +
         0.5 * cfg.head_inertia * s.angular_velocity.squaredNorm() + 0.5 * cfg.passive_rot_stiffness * e.squaredNorm();
}

double lean_amplitude(const DeviceLog& log, double t_begin, double t_end) {
  double peak = 0.0;
  bool any = false;
  for (const auto& r : log.records) {
    if (r.t < t_begin || r.t > t_end) continue;
    any = true;
    peak = std::max(peak, r.head.position.norm());
  }
  if (!any) throw DomainError("lean amplitude window holds no log records");
  return peak;
}

double lean_amplitude(const DeviceLog& log) {
  if (log.records.empty()) throw DomainError("lean amplitude of an empty log");
  return lean_amplitude(log, log.records.front().t, log.records.back().t);
}

namespace {

std::string_view torque_name(TorqueKind k) { return k == TorqueKind::free ? "free" : "cylinder_joint"; }

std::string format_record(const LogRecord& r) {
  const Quat& q = r.head.orientation;
  return fmt::format(
      R"({{"t":{},"fx":{},"fy":{},"fz":{},"tq_mode":"{}","px":{},"py":{},"pz":{},"qx":{},"qy":{},"qz":{},"qw":{}}})"
      "\n",
      r.t, r.applied_force.x(), r.applied_force.y(), r.applied_force.z(), torque_name(r.applied_torque),
      r.head.position.x(), r.head.position.y(), r.head.position.z(), q.x(), q.y(), q.z(), q.w());
}

bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

LogRecord parse_record(const std::string& line, std::size_t line_no) {
  LogRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.t = j.at("t").get<double>();
    r.applied_force = Vec3(j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("fz").get<double>());
    const auto mode = j.at("tq_mode").get<std::string>();
    if (mode != "free" && mode != "cylinder_joint") throw ParseError("unknown tq_mode '" + mode + "'", line_no);
    r.applied_torque = mode == "free" ? TorqueKind::free : TorqueKind::cylinder_joint;
    r.head.position = Vec3(j.at("px").get<double>(), j.at("py").get<double>(), j.at("pz").get<double>());
    r.head.orientation = Quat(j.at("qw").get<double>(), j.at("qx").get<double>(), j.at("qy").get<double>(),
                              j.at("qz").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what(), line_no);
  }
  r.commanded.force = r.applied_force;
  r.commanded.timestamp = r.t;
  return r;
}

}  // namespace

void export_log(const DeviceLog& log, const std::filesystem::path& path) {
  if (has_gz_suffix(path)) {
    gzFile gz = gzopen(path.c_str(), "wb");
    if (gz == nullptr) throw Error("cannot write log " + path.string());
    for (const auto& r : log.records) {
      const auto line = format_record(r);
      gzwrite(gz, line.data(), static_cast<unsigned>(line.size()));
    }
    gzclose(gz);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write log " + path.string());
  for (const auto& r : log.records) out << format_record(r);
}

DeviceLog import_log(const std::filesystem::path& path) {
  std::string text;
  if (has_gz_suffix(path)) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (gz == nullptr) throw Error("cannot open log " + path.string());
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0) text.append(buf, static_cast<std::size_t>(n));
    gzclose(gz);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open log " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }

  DeviceLog log;
  std::stringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    log.records.push_back(parse_record(line, line_no));
  }
  return log;
}

SimulatedDevice::SimulatedDevice(PlantConfig cfg, HeadState initial) : cfg_(cfg), state_(initial) {
  cfg_.validate();
}

Ack SimulatedDevice::send(const WrenchCommand& cmd) {
  if (faulted_) return {false, "device fault: " + fault_reason_};
  pending_ = cmd;
  have_pending_ = true;
  return {true, {}};
}

void SimulatedDevice::inject_fault(const std::string& reason) {
  faulted_ = true;
  fault_reason_ = reason;
}

void SimulatedDevice::step(double dt) {
  // Records carry the control-tick timestamp of the command they applied.
  const double t = have_pending_ ? pending_.timestamp : next_time_;
  WrenchCommand commanded;
  commanded.timestamp = t;
  if (have_pending_) commanded = pending_;
  const WrenchCommand applied = faulted_ ? WrenchCommand{Vec3::Zero(), {}, t} : commanded;
  have_pending_ = false;

  try {
    state_ = plant_step(cfg_, state_, applied, dt);
  } catch (const HardFault& e) {
    inject_fault(e.what());
    throw;
  }

  LogRecord rec;
  rec.t = t;
  rec.commanded = commanded;
  rec.applied_force = applied.force;
  rec.applied_torque = applied.torque.kind;
  rec.head = state_;
  log_.records.push_back(rec);
  next_time_ = t + dt;
}

DeviceLog SimulatedDevice::take_log() {
  DeviceLog out;
  std::swap(out, log_);
  return out;
}

}  // namespace kinhmd::device
