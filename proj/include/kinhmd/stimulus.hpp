#pragma once

#include <filesystem>
#include <vector>

#include "kinhmd/types.hpp"

namespace kinhmd::stimulus {

/// Double-step forward acceleration pattern: an eased step of +A followed
/// by its mirror image at -A. Each step is ease, plateau, ease.
struct StimulusPattern {
  double step_amplitude = 5.0;    // m/s^2
  double plateau_duration = 4.0;  // s
  double ease_duration = 0.5;     // s

  double step_duration() const { return 2.0 * ease_duration + plateau_duration; }
  double total_duration() const { return 2.0 * step_duration(); }

  /// Throws ConfigError when amplitude/ease are not positive or the plateau is negative.
  void validate() const;
};

enum class TraceSource { synthetic, recorded, live };

struct Trace {
  std::vector<AccelerationSample> samples;
  double sample_rate = 0.0;  // Hz
  TraceSource source = TraceSource::synthetic;

  double duration() const {
    return samples.empty() ? 0.0 : samples.back().timestamp - samples.front().timestamp;
  }
};

inline constexpr double kMinSynthesisRate = 100.0;

/// Forward-axis acceleration at time t in [0, total_duration]. Throws
/// DomainError outside that range.
double eval_pattern(const StimulusPattern& p, double t);

/// Samples the pattern at `rate` Hz: ceil(total * rate) + 1 samples, the
/// last one clamped to total_duration.
Trace synthesize_trace(const StimulusPattern& p, double rate);

/// Reads a `t,ax,ay,az` CSV trace. Timestamps are shifted to start at 0.
/// The sample rate is estimated from the mean spacing.
Trace load_trace(const std::filesystem::path& path);

void save_trace(const Trace& trace, const std::filesystem::path& path);

/// Linear interpolation of the trace at time t (trace-local time). Before
/// the first sample the first value is held; past the last sample the
/// stimulus is over and the result is zero.
Vec3 interpolate(const Trace& trace, double t);

}  // namespace kinhmd::stimulus
