#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "kinhmd/cueing.hpp"
#include "kinhmd/device.hpp"
#include "kinhmd/safety.hpp"
#include "kinhmd/stimulus.hpp"
#include "kinhmd/telemetry.hpp"

namespace kinhmd::session {

enum class SourceKind { live_udp, trace_replay, synthetic_stimulus };

std::string_view to_string(SourceKind s);
std::optional<SourceKind> source_from_string(std::string_view s);

struct TelemetryConfig {
  std::uint16_t port = telemetry::kDefaultPort;
  telemetry::ChannelMap channels;
  double staleness_timeout = 0.2;  // s
};

struct SessionConfig {
  double tick_rate = 1000.0;  // Hz
  SourceKind source = SourceKind::synthetic_stimulus;
  cueing::CueingConfig cueing;
  safety::SafetyConfig safety;
  device::PlantConfig plant;
  TelemetryConfig telemetry;
  stimulus::StimulusPattern stimulus;
  std::filesystem::path trace_path;
  std::filesystem::path log_path;
  /// Reference acceleration used to bound live gain changes when no
  /// calibration result is loaded: gain <= force_limit / reference.
  double gain_reference_accel = 5.0;
  double overrun_warning_ratio = 0.05;

  double tick_dt() const { return 1.0 / tick_rate; }
  /// tick_rate >= 250 Hz and every sub-config valid.
  void validate() const;
};

/// Reads a JSON config. Keys mirror the dotted names used in the docs, as
/// nested objects: {"safety": {"force_limit_n": 10}, ...}. Missing keys
/// keep their defaults; unknown keys are rejected.
SessionConfig load_config(const std::filesystem::path& path);
SessionConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SessionConfig& cfg);

}  // namespace kinhmd::session
