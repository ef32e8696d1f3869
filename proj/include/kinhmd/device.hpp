#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kinhmd/cueing.hpp"
#include "kinhmd/types.hpp"

namespace kinhmd::device {

inline double critical_damping(double stiffness, double mass) { return 2.0 * std::sqrt(stiffness * mass); }

/// Head + HMD on a linear neck, driven by the commanded wrench.
///
/// Translation: m x'' = F - k x - c x'. Rotation uses exponential
/// coordinates (rotation vector e relative to upright): a passive neck
/// spring-damper always acts, the force acting at `attachment_offset` adds
/// the lever torque r x F, and in cylinder-joint mode the device adds a PD
/// hold on the two axes orthogonal to the joint axis.
///
/// Workspace half-extents default to (0.65, 0.25, 0.5) m, reading the
/// device's nominal "5 m" depth as 0.5 m.
struct PlantConfig {
  double head_mass = 5.5;  // kg, head plus headset
  double neck_stiffness = 300.0;
  double neck_damping = critical_damping(300.0, 5.5);
  double head_inertia = 0.05;           // kg m^2 about the neck pivot
  double rot_stiffness = 200.0;         // N m/rad, device orientation hold
  double rot_damping = 6.0;             // N m s/rad
  double passive_rot_stiffness = 5.0;   // N m/rad, neck
  double passive_rot_damping = 0.5;     // N m s/rad
  Vec3 attachment_offset{-0.1, 0.0, 0.1};
  Vec3 workspace_halfextents{0.65, 0.25, 0.5};
  double integrator_dt = 0.001;

  double damping_ratio() const { return neck_damping / critical_damping(neck_stiffness, head_mass); }
  void validate() const;
};

/// Integrates the plant over `dt`, in integrator_dt substeps (the last one
/// shortened if dt is not a multiple). Throws HardFault on a non-finite state.
HeadState plant_step(const PlantConfig& cfg, const HeadState& s, const cueing::WrenchCommand& cmd, double dt);

/// Translational plus rotational mechanical energy (kinetic and spring).
double mechanical_energy(const PlantConfig& cfg, const HeadState& s);

/// Rotation vector of the orientation relative to upright.
Vec3 rotation_vector(const Quat& q);
Quat from_rotation_vector(const Vec3& e);

struct LogRecord {
  double t = 0.0;
  cueing::WrenchCommand commanded;
  Vec3 applied_force = Vec3::Zero();
  cueing::TorqueKind applied_torque = cueing::TorqueKind::free;
  HeadState head;
};

struct DeviceLog {
  std::vector<LogRecord> records;
};

/// Peak Euclidean head displacement over records with t in [t_begin, t_end].
/// Throws DomainError if the window holds no record.
double lean_amplitude(const DeviceLog& log, double t_begin, double t_end);
double lean_amplitude(const DeviceLog& log);

/// JSON lines, one object per tick with fields
/// t, fx, fy, fz, tq_mode, px, py, pz, qx, qy, qz, qw. A ".gz" suffix
/// selects gzip compression.
void export_log(const DeviceLog& log, const std::filesystem::path& path);
DeviceLog import_log(const std::filesystem::path& path);

struct Ack {
  bool accepted = false;
  std::string reason;
};

/// Device seam. Real hardware would implement the same interface.
class Device {
 public:
  virtual ~Device() = default;
  virtual Ack send(const cueing::WrenchCommand& cmd) = 0;
  /// Advances the device by one control tick, applying the last accepted command.
  virtual void step(double dt) = 0;
  virtual bool faulted() const = 0;
  virtual const HeadState& head() const = 0;
};

class SimulatedDevice final : public Device {
 public:
  explicit SimulatedDevice(PlantConfig cfg, HeadState initial = {});

  Ack send(const cueing::WrenchCommand& cmd) override;
  void step(double dt) override;
  bool faulted() const override { return faulted_; }
  const HeadState& head() const override { return state_; }

  void inject_fault(const std::string& reason);
  const std::string& fault_reason() const { return fault_reason_; }

  const PlantConfig& config() const { return cfg_; }
  const DeviceLog& log() const { return log_; }
  DeviceLog take_log();
  void reserve_log(std::size_t n) { log_.records.reserve(n); }

 private:
  PlantConfig cfg_;
  HeadState state_;
  cueing::WrenchCommand pending_;
  bool have_pending_ = false;
  double next_time_ = 0.0;
  bool faulted_ = false;
  std::string fault_reason_;
  DeviceLog log_;
};

}  // namespace kinhmd::device
